/** Render-side view of the server state: buffered frames and interpolation between them. */

import type { StateFrame, Vec3 } from "./protocol.js";

/** Frames older than this many intervals behind the newest are dropped. */
const BUFFER_FRAMES = 8;
/** Extrapolation past the newest frame stops after this many missed frames. */
export const MAX_MISSED_FRAMES = 2;

export interface SceneSnapshot {
  pose: Vec3;
  goalDistance: number;
  inContact: boolean;
  recording: boolean;
  contactWrench: Vec3;
  /** Server time the pose corresponds to. */
  t: number;
  /** True once the newest frame is older than the extrapolation limit. */
  stale: boolean;
}

interface Buffered {
  frame: StateFrame;
  arrivalMs: number;
}

export class SceneModel {
  private frames: Buffered[] = [];

  /** `frameInterval` is the server state period (s); rendering lags the newest frame by one interval. */
  constructor(private readonly frameInterval: number) {}

  get latest(): StateFrame | null {
    return this.frames.length ? this.frames[this.frames.length - 1].frame : null;
  }

  /** Adds a frame. Out-of-order or duplicate frames are ignored. */
  push(frame: StateFrame, arrivalMs: number): void {
    const last = this.latest;
    if (last !== null && frame.t <= last.t) {
      return;
    }
    this.frames.push({ frame, arrivalMs });
    const horizon = frame.t - BUFFER_FRAMES * this.frameInterval;
    while (this.frames.length > 2 && this.frames[0].frame.t < horizon) {
      this.frames.shift();
    }
  }

  clear(): void {
    this.frames = [];
  }

  /** State to draw at local time `nowMs`, or `null` before the first frame. */
  sample(nowMs: number): SceneSnapshot | null {
    const n = this.frames.length;
    if (n === 0) {
      return null;
    }
    const newest = this.frames[n - 1];
    const serverNow = newest.frame.t + (nowMs - newest.arrivalMs) / 1000;
    let target = serverNow - this.frameInterval;
    const limit = newest.frame.t + MAX_MISSED_FRAMES * this.frameInterval;
    const stale = serverNow > limit + this.frameInterval;
    target = Math.min(target, limit);

    if (target <= this.frames[0].frame.t) {
      return snapshot(this.frames[0].frame, this.frames[0].frame.pose, this.frames[0].frame.t, stale);
    }
    if (target >= newest.frame.t) {
      const f = newest.frame;
      const dt = target - f.t;
      const pose: Vec3 = [f.pose[0] + f.twist[0] * dt, f.pose[1] + f.twist[1] * dt, f.pose[2] + f.twist[2] * dt];
      return snapshot(f, pose, target, stale);
    }
    let i = n - 1;
    while (this.frames[i - 1].frame.t > target) {
      i -= 1;
    }
    const a = this.frames[i - 1].frame;
    const b = this.frames[i].frame;
    const u = (target - a.t) / (b.t - a.t);
    const pose = a.pose.map((v, k) => v + (b.pose[k] - v) * u) as Vec3;
    return snapshot(u < 0.5 ? a : b, pose, target, stale);
  }
}

function snapshot(f: StateFrame, pose: Vec3, t: number, stale: boolean): SceneSnapshot {
  return {
    pose,
    goalDistance: f.goal_distance,
    inContact: f.in_contact,
    recording: f.recording,
    contactWrench: f.contact_wrench,
    t,
    stale,
  };
}
