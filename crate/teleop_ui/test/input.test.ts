import { describe, expect, it } from "vitest";
import {
  DEFAULT_BINDING,
  InputLimiter,
  MAX_SEND_RATE,
  applyDeadZone,
  combineAxes,
  gamepadAxes,
  keyboardAxes,
  unreachableAxes,
  type InputBinding,
} from "../src/input";
import type { Vec3 } from "../src/protocol";

describe("axis mapping", () => {
  it("applies clamp and dead zone", () => {
    expect(applyDeadZone(0.04)).toBe(0);
    expect(applyDeadZone(-0.04)).toBe(0);
    expect(applyDeadZone(0.5)).toBe(0.5);
    expect(applyDeadZone(3)).toBe(1);
    expect(applyDeadZone(Number.NaN)).toBe(0);
  });

  it("maps full stick deflection to 1.0", () => {
    expect(gamepadAxes([1, 0, 0, 0], DEFAULT_BINDING)).toEqual([1, 0, 0]);
    expect(gamepadAxes([0, -1, 0.3, 0], DEFAULT_BINDING)).toEqual([0, -1, 0.3]);
    expect(gamepadAxes([], DEFAULT_BINDING)).toEqual([0, 0, 0]);
  });

  it("maps keys with direction and level", () => {
    expect(keyboardAxes(new Set(["KeyW", "KeyQ"]), DEFAULT_BINDING)).toEqual([0, 0.5, 0.5]);
    expect(keyboardAxes(new Set(["KeyA", "KeyD"]), DEFAULT_BINDING)).toEqual([0, 0, 0]);
  });

  it("lets a deflected gamepad win over the keyboard", () => {
    const kb: Vec3 = [0.5, 0, 0];
    expect(combineAxes([0, 1, 0], kb)).toEqual([0, 1, 0]);
    expect(combineAxes([0, 0, 0], kb)).toEqual(kb);
    expect(combineAxes(null, kb)).toEqual(kb);
  });

  it("reports unreachable axes", () => {
    expect(unreachableAxes(DEFAULT_BINDING)).toEqual([]);
    const partial: InputBinding = { gamepad: [{ source: 0, target: 0, sensitivity: 1 }], keyboard: [], keyboardLevel: 1 };
    expect(unreachableAxes(partial)).toEqual([1, 2]);
  });
});

describe("send limiter", () => {
  it("sends a single zero then stays silent without input", () => {
    const l = new InputLimiter(30);
    const sent = [0, 16, 33, 50, 66, 100, 500].map((t) => l.offer([0, 0, 0], t)).filter((v) => v !== null);
    expect(sent).toEqual([[0, 0, 0]]);
  });

  it("stays at or below the rate bound under 250 Hz polling", () => {
    const l = new InputLimiter(30);
    const times: number[] = [];
    for (let t = 0; t < 2000; t += 4) {
      if (l.offer([Math.sin(t / 100), 0.5, 0], t) !== null) times.push(t);
    }
    const rate = times.length / 2;
    expect(rate).toBeLessThanOrEqual(MAX_SEND_RATE);
    expect(rate).toBeGreaterThan(25);
    for (let i = 1; i < times.length; i++) expect(times[i] - times[i - 1]).toBeGreaterThanOrEqual(1000 / 30);
  });

  it("delivers the release once, in the next slot", () => {
    const l = new InputLimiter(30);
    expect(l.offer([1, 0, 0], 0)).toEqual([1, 0, 0]);
    expect(l.offer([0, 0, 0], 10)).toBeNull();
    expect(l.offer([0, 0, 0], 40)).toEqual([0, 0, 0]);
    expect(l.offer([0, 0, 0], 80)).toBeNull();
  });

  it("refuses rates above the bound", () => {
    expect(() => new InputLimiter(60)).toThrow(RangeError);
  });
});
