/** Wire types of the `/session` WebSocket. Frames are JSON objects tagged by `type`. */

export const PROTOCOL_VERSION = 1;

/** Axis magnitudes below this map to zero. */
export const DEAD_ZONE = 0.05;

export type Vec3 = [number, number, number];

export interface StateFrame {
  t: number;
  pose: Vec3;
  twist: Vec3;
  contact_wrench: Vec3;
  in_contact: boolean;
  goal_distance: number;
  recording: boolean;
}

export type ErrorCode = "malformed" | "bad_request" | "recording" | "internal";

/** Scene dimensions (m) for drawing the cell. */
export interface Geometry {
  part_half_width: number;
  part_half_height: number;
  hole_half_width: number;
  hole_depth: number;
  chamfer: number;
}

export interface Hello {
  type: "hello";
  version: number;
  session: number;
  dt: number;
  state_rate: number;
  wrench_limits: Vec3;
  geometry: Geometry;
}

export type ServerMessage =
  | Hello
  | ({ type: "state" } & StateFrame)
  | { type: "ack"; request: string; detail?: string; duration?: number }
  | { type: "error"; code: ErrorCode; message: string };

export type ClientMessage =
  | { type: "wrench"; axes: Vec3 }
  | { type: "start_recording" }
  | { type: "stop_recording"; success: boolean }
  | { type: "reset"; seed?: number };

export class ProtocolError extends Error {}

const isNum = (v: unknown): v is number => typeof v === "number" && Number.isFinite(v);
const isVec3 = (v: unknown): v is Vec3 => Array.isArray(v) && v.length === 3 && v.every(isNum);

const GEOMETRY_KEYS = ["part_half_width", "part_half_height", "hole_half_width", "hole_depth", "chamfer"] as const;
const isGeometry = (v: unknown): v is Geometry =>
  typeof v === "object" && v !== null && GEOMETRY_KEYS.every((k) => isNum((v as Record<string, unknown>)[k]));

/** Parses and validates one server frame. */
export function parseServerMessage(text: string): ServerMessage {
  let v: unknown;
  try {
    v = JSON.parse(text);
  } catch (e) {
    throw new ProtocolError(`not JSON: ${(e as Error).message}`);
  }
  if (typeof v !== "object" || v === null || Array.isArray(v)) {
    throw new ProtocolError("frame is not an object");
  }
  const m = v as Record<string, unknown>;
  switch (m.type) {
    case "hello":
      if (
        isNum(m.version) &&
        isNum(m.session) &&
        isNum(m.dt) &&
        isNum(m.state_rate) &&
        isVec3(m.wrench_limits) &&
        isGeometry(m.geometry)
      ) {
        return m as ServerMessage;
      }
      break;
    case "state":
      if (
        isNum(m.t) &&
        isVec3(m.pose) &&
        isVec3(m.twist) &&
        isVec3(m.contact_wrench) &&
        typeof m.in_contact === "boolean" &&
        isNum(m.goal_distance) &&
        typeof m.recording === "boolean"
      ) {
        return m as ServerMessage;
      }
      break;
    case "ack":
      if (
        typeof m.request === "string" &&
        (m.detail === undefined || typeof m.detail === "string") &&
        (m.duration === undefined || isNum(m.duration))
      ) {
        return m as ServerMessage;
      }
      break;
    case "error":
      if (typeof m.code === "string" && typeof m.message === "string") {
        return m as ServerMessage;
      }
      break;
  }
  throw new ProtocolError(`invalid ${String(m.type)} frame`);
}

export function encodeClientMessage(m: ClientMessage): string {
  return JSON.stringify(m);
}
