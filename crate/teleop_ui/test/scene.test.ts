import { describe, expect, it } from "vitest";
import type { StateFrame } from "../src/protocol";
import { MAX_MISSED_FRAMES, SceneModel } from "../src/scene";

const frame = (t: number, x: number, vx = 0): StateFrame => ({
  t,
  pose: [x, 0.02, 0],
  twist: [vx, 0, 0],
  contact_wrench: [0, 0, 0],
  in_contact: false,
  goal_distance: Math.hypot(x, 0.02),
  recording: false,
});

describe("scene interpolation", () => {
  const dt = 1 / 30;

  it("is empty before the first frame", () => {
    expect(new SceneModel(dt).sample(0)).toBeNull();
  });

  it("interpolates between server frames one interval behind", () => {
    const s = new SceneModel(dt);
    s.push(frame(0, 0), 0);
    s.push(frame(dt, 0.003), 1000 * dt);
    // at the arrival of the second frame the view shows the first
    expect(s.sample(1000 * dt)!.pose[0]).toBeCloseTo(0, 12);
    expect(s.sample(1000 * dt * 1.5)!.pose[0]).toBeCloseTo(0.0015, 12);
  });

  it("tracks the server pose of each frame", () => {
    const s = new SceneModel(dt);
    for (let i = 0; i < 30; i++) {
      s.push(frame(i * dt, i * 1e-4), i * 1000 * dt);
      if (i > 0) expect(s.sample((i + 1) * 1000 * dt)!.pose[0]).toBeCloseTo(i * 1e-4, 12);
    }
  });

  it("never extrapolates past the missed-frame limit", () => {
    const s = new SceneModel(dt);
    s.push(frame(0, 0, 0.01), 0);
    s.push(frame(dt, 0.01 * dt, 0.01), 1000 * dt);
    const far = s.sample(10_000)!;
    expect(far.pose[0]).toBeCloseTo(0.01 * dt * (1 + MAX_MISSED_FRAMES), 12);
    expect(far.stale).toBe(true);
    expect(s.sample(1000 * dt * 2)!.stale).toBe(false);
  });

  it("ignores stale and duplicate frames", () => {
    const s = new SceneModel(dt);
    s.push(frame(1, 0.001), 0);
    s.push(frame(0.5, 0.009), 1);
    s.push(frame(1, 0.009), 2);
    expect(s.latest!.pose[0]).toBe(0.001);
  });
});
