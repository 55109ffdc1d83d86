import { describe, expect, it } from "vitest";
import { SessionClient, type SocketLike } from "../src/session";

/** Scripted server end of a socket. */
class FixtureSocket implements SocketLike {
  readyState = 0;
  sent: unknown[] = [];
  onopen: ((ev: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: ((ev: unknown) => void) | null = null;
  onerror: ((ev: unknown) => void) | null = null;
  send(data: string) {
    this.sent.push(JSON.parse(data));
  }
  close() {
    this.readyState = 3;
  }
  open() {
    this.readyState = 1;
    this.onopen?.({});
  }
  deliver(m: object | string) {
    this.onmessage?.({ data: typeof m === "string" ? m : JSON.stringify(m) });
  }
  drop() {
    this.readyState = 3;
    this.onclose?.({});
  }
}

const HELLO = {
  type: "hello",
  version: 1,
  session: 1,
  dt: 0.01,
  state_rate: 30,
  wrench_limits: [10, 10, 0.15],
  geometry: { part_half_width: 0.005, part_half_height: 0.01, hole_half_width: 0.0052, hole_depth: 0.01, chamfer: 0.0015 },
};
const state = (recording: boolean) => ({
  type: "state",
  t: 0.1,
  pose: [0, 0.02, 0],
  twist: [0, 0, 0],
  contact_wrench: [0, 0, 0],
  in_contact: false,
  goal_distance: 0.02,
  recording,
});

function connected() {
  const sock = new FixtureSocket();
  const errors: string[] = [];
  const statuses: string[] = [];
  const client = new SessionClient("ws://fixture/session", { error: (m) => errors.push(m), status: (s) => statuses.push(s) }, () => sock);
  sock.open();
  sock.deliver(HELLO);
  return { sock, client, errors, statuses };
}

describe("session client", () => {
  it("enables input only after the handshake", () => {
    const sock = new FixtureSocket();
    const client = new SessionClient("ws://x", {}, () => sock);
    sock.open();
    expect(client.inputEnabled).toBe(false);
    expect(client.sendAxes([1, 0, 0])).toBe(false);
    sock.deliver(HELLO);
    expect(client.inputEnabled).toBe(true);
    expect(client.hello!.wrench_limits).toEqual([10, 10, 0.15]);
    expect(client.sendAxes([1, 0, 0])).toBe(true);
    expect(sock.sent).toEqual([{ type: "wrench", axes: [1, 0, 0] }]);
  });

  it("follows the server recording flag and counts demos", () => {
    const { sock, client } = connected();
    client.startRecording();
    sock.deliver({ type: "ack", request: "start_recording" });
    sock.deliver(state(true));
    expect(client.recording).toBe(true);
    expect(client.stopRecording(true)).toBe(true);
    sock.deliver({ type: "ack", request: "stop_recording", detail: "session-1-0000", duration: 5.01 });
    expect(client.recording).toBe(false);
    expect(client.demoCount).toBe(1);
    expect(client.lastDemoDuration).toBe(5.01);
    expect(sock.sent).toEqual([{ type: "start_recording" }, { type: "stop_recording", success: true }]);
  });

  it("blocks stop until an outcome is chosen", () => {
    const { sock, client, errors } = connected();
    expect(client.stopRecording(null)).toBe(false);
    expect(sock.sent).toEqual([]);
    expect(errors.length).toBe(1);
  });

  it("shows server rejections inline and survives garbage", () => {
    const { sock, client, errors } = connected();
    sock.deliver({ type: "error", code: "recording", message: "not recording" });
    sock.deliver("{{{");
    sock.deliver({ type: "state", t: "soon" });
    expect(errors).toHaveLength(3);
    expect(errors[0]).toBe("recording: not recording");
    expect(client.lastError).toContain("state");
    expect(client.status).toBe("open");
  });

  it("disables input after a disconnect", () => {
    const { sock, client, statuses } = connected();
    sock.drop();
    expect(client.status).toBe("closed");
    expect(client.inputEnabled).toBe(false);
    expect(client.reset()).toBe(false);
    expect(statuses.at(-1)).toBe("closed");
  });

  it("reports an unreachable server without throwing", async () => {
    const statuses: string[] = [];
    const client = new SessionClient("ws://nowhere", { status: (s) => statuses.push(s) }, () => {
      throw new Error("refused");
    });
    await Promise.resolve();
    expect(client.status).toBe("closed");
    expect(statuses).toEqual(["closed"]);
  });

  it("closes on a protocol version mismatch", () => {
    const sock = new FixtureSocket();
    const client = new SessionClient("ws://x", {}, () => sock);
    sock.open();
    sock.deliver({ ...HELLO, version: 2 });
    expect(client.status).toBe("closed");
  });
});
