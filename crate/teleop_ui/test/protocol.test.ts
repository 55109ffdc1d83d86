import { describe, expect, it } from "vitest";
import { ProtocolError, encodeClientMessage, parseServerMessage } from "../src/protocol";

const hello =
  '{"type":"hello","version":1,"session":3,"dt":0.01,"state_rate":30,"wrench_limits":[10,10,0.15],' +
  '"geometry":{"part_half_width":0.005,"part_half_height":0.01,"hole_half_width":0.0052,"hole_depth":0.01,"chamfer":0.0015}}';
const state =
  '{"type":"state","t":1.5,"pose":[0.001,0.02,0.1],"twist":[0,-0.01,0],"contact_wrench":[0,0,0],' +
  '"in_contact":false,"goal_distance":0.02002,"recording":true}';

describe("server frames", () => {
  it("parses every message kind", () => {
    expect(parseServerMessage(hello)).toMatchObject({ type: "hello", wrench_limits: [10, 10, 0.15] });
    expect(parseServerMessage(state)).toMatchObject({ type: "state", recording: true });
    expect(parseServerMessage('{"type":"ack","request":"reset"}')).toEqual({ type: "ack", request: "reset" });
    expect(parseServerMessage('{"type":"ack","request":"stop_recording","detail":"session-3-0000","duration":5}'))
      .toMatchObject({ duration: 5 });
    expect(parseServerMessage('{"type":"error","code":"malformed","message":"x"}')).toMatchObject({ code: "malformed" });
  });

  it("rejects malformed frames", () => {
    for (const bad of ["", "{", "null", "[1]", '{"type":"state","t":1}', '{"type":"fly"}', hello.replace("[10,10,0.15]", "[10,10]")]) {
      expect(() => parseServerMessage(bad)).toThrow(ProtocolError);
    }
  });
});

describe("client frames", () => {
  it("match the server's expected shapes", () => {
    expect(encodeClientMessage({ type: "wrench", axes: [0.5, -1, 0] })).toBe('{"type":"wrench","axes":[0.5,-1,0]}');
    expect(encodeClientMessage({ type: "stop_recording", success: true })).toBe('{"type":"stop_recording","success":true}');
    expect(encodeClientMessage({ type: "reset" })).toBe('{"type":"reset"}');
  });
});
