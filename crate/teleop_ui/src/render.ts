/** Side-elevation drawing of the cell (x to the right, z up) with a millimetre grid. */

import type { Geometry, Vec3 } from "./protocol.js";
import type { SceneSnapshot } from "./scene.js";

/** The drawing calls used, so tests can record them without a browser. */
export interface Canvas2D {
  fillStyle: string;
  strokeStyle: string;
  lineWidth: number;
  font: string;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  stroke(): void;
  fill(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fillText(text: string, x: number, y: number): void;
}

export interface View {
  width: number;
  height: number;
  /** World half-width (m) shown across the canvas. */
  span: number;
}

export const DEFAULT_VIEW: View = { width: 800, height: 600, span: 0.03 };

/** World metres to canvas pixels, with the goal at the horizontal centre, 60% down. */
export function toCanvas(view: View, x: number, z: number): [number, number] {
  const s = view.width / (2 * view.span);
  return [view.width / 2 + x * s, view.height * 0.6 - z * s];
}

/** Corners of the part outline at `pose`, counter-clockwise from bottom left. */
export function partCorners(g: Geometry, pose: Vec3): [number, number][] {
  const [x, z, th] = pose;
  const c = Math.cos(th);
  const s = Math.sin(th);
  return [
    [-g.part_half_width, -g.part_half_height],
    [g.part_half_width, -g.part_half_height],
    [g.part_half_width, g.part_half_height],
    [-g.part_half_width, g.part_half_height],
  ].map(([u, v]) => [x + c * u - s * v, z + s * u + c * v]);
}

/** Outline of the hole profile, left wall to right wall, in world coordinates. */
export function holeProfile(g: Geometry, span: number): [number, number][] {
  const floor = -g.part_half_height;
  const top = floor + g.hole_depth;
  const w = g.hole_half_width;
  const ch = g.chamfer;
  return [
    [-span, top],
    [-w - ch, top],
    [-w, top - ch],
    [-w, floor],
    [w, floor],
    [w, top - ch],
    [w + ch, top],
    [span, top],
  ];
}

export function drawScene(
  ctx: Canvas2D,
  view: View,
  g: Geometry,
  snap: SceneSnapshot | null,
  gauges: { axes: Vec3; limits: Vec3 } | null,
): void {
  ctx.clearRect(0, 0, view.width, view.height);
  ctx.fillStyle = "#fafafa";
  ctx.fillRect(0, 0, view.width, view.height);

  // millimetre grid, heavier every 5 mm
  const mm = 0.001;
  const lines = Math.ceil(view.span / mm);
  for (let i = -lines; i <= lines; i++) {
    ctx.strokeStyle = i % 5 === 0 ? "#d0d0d0" : "#ececec";
    ctx.lineWidth = 1;
    ctx.beginPath();
    const [vx, vy0] = toCanvas(view, i * mm, view.span);
    const [, vy1] = toCanvas(view, i * mm, -view.span);
    ctx.moveTo(vx, vy0);
    ctx.lineTo(vx, vy1);
    const [hx0, hy] = toCanvas(view, -view.span, i * mm);
    const [hx1] = toCanvas(view, view.span, i * mm);
    ctx.moveTo(hx0, hy);
    ctx.lineTo(hx1, hy);
    ctx.stroke();
  }

  ctx.strokeStyle = "#333";
  ctx.lineWidth = 2;
  ctx.beginPath();
  holeProfile(g, view.span).forEach(([x, z], i) => {
    const [px, py] = toCanvas(view, x, z);
    if (i === 0) ctx.moveTo(px, py);
    else ctx.lineTo(px, py);
  });
  ctx.stroke();

  // goal marker: part centre at the goal pose
  const [gx, gy] = toCanvas(view, 0, 0);
  ctx.strokeStyle = "#2a8";
  ctx.beginPath();
  ctx.arc(gx, gy, 4, 0, 2 * Math.PI);
  ctx.stroke();

  if (snap !== null) {
    ctx.fillStyle = snap.stale ? "#aaa" : snap.inContact ? "#e63" : "#36c";
    ctx.beginPath();
    partCorners(g, snap.pose).forEach(([x, z], i) => {
      const [px, py] = toCanvas(view, x, z);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.closePath();
    ctx.fill();

    ctx.fillStyle = "#111";
    ctx.font = "14px monospace";
    ctx.fillText(`goal distance ${(snap.goalDistance * 1000).toFixed(2)} mm`, 10, 20);
    ctx.fillText(`t ${snap.t.toFixed(2)} s`, 10, 38);
    if (snap.recording) {
      ctx.fillStyle = "#d00";
      ctx.beginPath();
      ctx.arc(view.width - 20, 20, 8, 0, 2 * Math.PI);
      ctx.fill();
    }
  }

  if (gauges !== null) {
    const names = ["fx", "fz", "tau"];
    const units = ["N", "N", "N m"];
    gauges.axes.forEach((a, i) => {
      const y = view.height - 70 + i * 22;
      ctx.fillStyle = "#ddd";
      ctx.fillRect(60, y, 200, 12);
      ctx.fillStyle = "#36c";
      ctx.fillRect(160, y, 100 * a, 12);
      ctx.fillStyle = "#111";
      ctx.fillText(`${names[i]} ±${gauges.limits[i]} ${units[i]}`, 270, y + 11);
    });
  }
}
