/** Gamepad and keyboard mapping to normalized wrench axes, and the rate-limited send loop. */

import { DEAD_ZONE, type Vec3 } from "./protocol.js";

/** Index of a wrench axis: 0 = fx, 1 = fz, 2 = tau. */
export type WrenchAxis = 0 | 1 | 2;

export interface GamepadAxisBinding {
  /** Index into `Gamepad.axes`. */
  source: number;
  target: WrenchAxis;
  /** Multiplier applied before clamping; negative values invert the axis. */
  sensitivity: number;
}

export interface KeyBinding {
  /** `KeyboardEvent.code`. */
  code: string;
  target: WrenchAxis;
  direction: 1 | -1;
}

export interface InputBinding {
  gamepad: GamepadAxisBinding[];
  keyboard: KeyBinding[];
  /** Deflection produced by a held key. */
  keyboardLevel: number;
}

/** Left stick drives fx and fz (stick up pushes down into the hole), right stick x drives tau. */
export const DEFAULT_BINDING: InputBinding = {
  gamepad: [
    { source: 0, target: 0, sensitivity: 1 },
    { source: 1, target: 1, sensitivity: 1 },
    { source: 2, target: 2, sensitivity: 1 },
  ],
  keyboard: [
    { code: "KeyA", target: 0, direction: -1 },
    { code: "KeyD", target: 0, direction: 1 },
    { code: "KeyW", target: 1, direction: 1 },
    { code: "KeyS", target: 1, direction: -1 },
    { code: "KeyQ", target: 2, direction: 1 },
    { code: "KeyE", target: 2, direction: -1 },
  ],
  keyboardLevel: 0.5,
};

/** Axes no binding of `b` can reach; empty for a usable binding. */
export function unreachableAxes(b: InputBinding): WrenchAxis[] {
  const reached = new Set<number>([...b.gamepad.map((g) => g.target), ...b.keyboard.map((k) => k.target)]);
  return ([0, 1, 2] as WrenchAxis[]).filter((a) => !reached.has(a));
}

export function applyDeadZone(v: number): number {
  const c = Math.max(-1, Math.min(1, Number.isFinite(v) ? v : 0));
  return Math.abs(c) < DEAD_ZONE ? 0 : c;
}

export function gamepadAxes(raw: readonly number[], b: InputBinding): Vec3 {
  const out: Vec3 = [0, 0, 0];
  for (const g of b.gamepad) {
    out[g.target] += (raw[g.source] ?? 0) * g.sensitivity;
  }
  return out.map(applyDeadZone) as Vec3;
}

export function keyboardAxes(pressed: ReadonlySet<string>, b: InputBinding): Vec3 {
  const out: Vec3 = [0, 0, 0];
  for (const k of b.keyboard) {
    if (pressed.has(k.code)) {
      out[k.target] += k.direction * b.keyboardLevel;
    }
  }
  return out.map(applyDeadZone) as Vec3;
}

export const isZero = (v: Vec3): boolean => v.every((a) => a === 0);

/**
 * Combines both devices. A gamepad with any deflection outside the dead zone wins
 * outright; otherwise the keyboard applies.
 */
export function combineAxes(gamepad: Vec3 | null, keyboard: Vec3): Vec3 {
  return gamepad !== null && !isZero(gamepad) ? gamepad : keyboard;
}

/** Upper bound on wrench messages per second. */
export const MAX_SEND_RATE = 35;

/**
 * Decides which axis samples become wrench messages: at most one per
 * `1 / rate` seconds while deflected, and a single zero message on release.
 */
export class InputLimiter {
  private lastSent = -Infinity;
  private lastAxes: Vec3 | null = null;
  private readonly interval: number;

  constructor(rate = 30) {
    if (!(rate > 0 && rate <= MAX_SEND_RATE)) {
      throw new RangeError(`send rate ${rate} outside (0, ${MAX_SEND_RATE}]`);
    }
    this.interval = 1000 / rate;
  }

  /** Offers a sample taken at `nowMs`; returns the axes to send or `null`. */
  offer(axes: Vec3, nowMs: number): Vec3 | null {
    const released = isZero(axes);
    if (released && this.lastAxes !== null && isZero(this.lastAxes)) {
      return null;
    }
    // a release inside the current slot goes out on the next offer
    if (nowMs - this.lastSent < this.interval) {
      return null;
    }
    this.lastSent = nowMs;
    this.lastAxes = [...axes] as Vec3;
    return axes;
  }
}
