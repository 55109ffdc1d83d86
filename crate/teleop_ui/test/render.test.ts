import { describe, expect, it } from "vitest";
import type { Geometry } from "../src/protocol";
import { DEFAULT_VIEW, drawScene, holeProfile, partCorners, toCanvas, type Canvas2D } from "../src/render";

const G: Geometry = { part_half_width: 0.005, part_half_height: 0.01, hole_half_width: 0.0052, hole_depth: 0.01, chamfer: 0.0015 };

function recorder() {
  const calls: string[] = [];
  const texts: string[] = [];
  const ctx = new Proxy({} as Record<string, unknown>, {
    get: (target, key: string) =>
      key in target
        ? target[key]
        : (...args: unknown[]) => {
            calls.push(key);
            if (key === "fillText") texts.push(String(args[0]));
          },
    set: (target, key: string, v) => {
      target[key] = v;
      return true;
    },
  }) as unknown as Canvas2D;
  return { ctx, calls, texts };
}

describe("scene geometry", () => {
  it("places the goal centre and scales metres to pixels", () => {
    expect(toCanvas(DEFAULT_VIEW, 0, 0)).toEqual([400, 360]);
    const [x] = toCanvas(DEFAULT_VIEW, 0.001, 0);
    expect(x - 400).toBeCloseTo(800 / 0.06 / 1000, 9);
  });

  it("rotates the part about its centre", () => {
    const c = partCorners(G, [0, 0, Math.PI / 2]);
    expect(c[0][0]).toBeCloseTo(0.01, 12);
    expect(c[0][1]).toBeCloseTo(-0.005, 12);
  });

  it("puts the part bottom on the hole floor at the goal", () => {
    const floor = holeProfile(G, 0.03)[3][1];
    expect(partCorners(G, [0, 0, 0])[0][1]).toBeCloseTo(floor, 12);
  });
});

describe("drawing", () => {
  it("draws readouts and gauges from the snapshot and handshake limits", () => {
    const { ctx, texts, calls } = recorder();
    const snap = { pose: [0, 0.0123, 0] as [number, number, number], goalDistance: 0.0123, inContact: true, recording: true, contactWrench: [0, 0, 0] as [number, number, number], t: 2, stale: false };
    drawScene(ctx, DEFAULT_VIEW, G, snap, { axes: [0.5, -1, 0], limits: [10, 25, 0.15] });
    expect(texts).toContain("goal distance 12.30 mm");
    expect(texts.some((t) => t.includes("±25"))).toBe(true);
    expect(texts.some((t) => t.includes("±0.15"))).toBe(true);
    expect(calls.filter((c) => c === "arc").length).toBeGreaterThanOrEqual(2);
  });

  it("draws the empty cell before any state arrives", () => {
    const { ctx, texts } = recorder();
    drawScene(ctx, DEFAULT_VIEW, G, null, null);
    expect(texts).toEqual([]);
  });
});
