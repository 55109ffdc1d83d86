/** Client side of one teleoperation session: handshake, frame stream, recording workflow. */

import {
  PROTOCOL_VERSION,
  ProtocolError,
  encodeClientMessage,
  parseServerMessage,
  type ClientMessage,
  type Hello,
  type ServerMessage,
  type StateFrame,
  type Vec3,
} from "./protocol.js";

/** The subset of the browser `WebSocket` the client relies on. */
export interface SocketLike {
  readonly readyState: number;
  send(data: string): void;
  close(): void;
  onopen: ((ev: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev: unknown) => void) | null;
  onerror: ((ev: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

const OPEN = 1;

export type ConnectionStatus = "connecting" | "open" | "closed";

export interface SessionEvents {
  status?: (s: ConnectionStatus, reason?: string) => void;
  hello?: (h: Hello) => void;
  state?: (f: StateFrame) => void;
  /** Server rejection or protocol violation, for inline display. */
  error?: (message: string) => void;
  /** A recording finished and was stored by the server. */
  recorded?: (id: string, duration: number) => void;
}

export class SessionClient {
  status: ConnectionStatus = "connecting";
  hello: Hello | null = null;
  /** Recording flag as last reported by the server. */
  recording = false;
  demoCount = 0;
  lastDemoDuration: number | null = null;
  lastError: string | null = null;
  private socket: SocketLike;

  constructor(
    url: string,
    private readonly events: SessionEvents = {},
    factory: SocketFactory = (u) => new WebSocket(u) as unknown as SocketLike,
  ) {
    try {
      this.socket = factory(url);
    } catch (e) {
      this.socket = closedSocket();
      queueMicrotask(() => this.setStatus("closed", (e as Error).message));
      return;
    }
    this.socket.onmessage = (ev) => this.receive(ev.data);
    this.socket.onclose = () => this.setStatus("closed", "connection closed");
    this.socket.onerror = () => this.setStatus("closed", "connection failed");
  }

  /** Input is accepted only on a live, handshaken session. */
  get inputEnabled(): boolean {
    return this.status === "open" && this.hello !== null && this.socket.readyState === OPEN;
  }

  sendAxes(axes: Vec3): boolean {
    return this.send({ type: "wrench", axes });
  }

  startRecording(): boolean {
    return this.send({ type: "start_recording" });
  }

  /** Stopping needs an explicit outcome; `null` is refused without contacting the server. */
  stopRecording(success: boolean | null): boolean {
    if (success === null) {
      this.reportError("choose success or failure before stopping");
      return false;
    }
    return this.send({ type: "stop_recording", success });
  }

  reset(seed?: number): boolean {
    return this.send(seed === undefined ? { type: "reset" } : { type: "reset", seed });
  }

  close(): void {
    this.socket.close();
    this.setStatus("closed", "closed by client");
  }

  private send(m: ClientMessage): boolean {
    if (!this.inputEnabled) {
      return false;
    }
    this.socket.send(encodeClientMessage(m));
    return true;
  }

  private receive(data: unknown): void {
    if (typeof data !== "string") {
      this.reportError("unexpected binary frame");
      return;
    }
    let m: ServerMessage;
    try {
      m = parseServerMessage(data);
    } catch (e) {
      this.reportError(e instanceof ProtocolError ? e.message : String(e));
      return;
    }
    switch (m.type) {
      case "hello":
        if (m.version !== PROTOCOL_VERSION) {
          this.socket.close();
          this.setStatus("closed", `server speaks protocol ${m.version}, expected ${PROTOCOL_VERSION}`);
          return;
        }
        this.hello = m;
        this.setStatus("open");
        this.events.hello?.(m);
        break;
      case "state": {
        const { type: _type, ...frame } = m;
        this.recording = frame.recording;
        this.events.state?.(frame);
        break;
      }
      case "ack":
        if (m.request === "stop_recording" && m.detail !== undefined && m.duration !== undefined) {
          this.demoCount += 1;
          this.lastDemoDuration = m.duration;
          this.events.recorded?.(m.detail, m.duration);
        }
        if (m.request === "start_recording") {
          this.recording = true;
        } else if (m.request === "stop_recording") {
          this.recording = false;
        }
        this.lastError = null;
        break;
      case "error":
        this.reportError(`${m.code}: ${m.message}`);
        break;
    }
  }

  private reportError(message: string): void {
    this.lastError = message;
    this.events.error?.(message);
  }

  private setStatus(s: ConnectionStatus, reason?: string): void {
    if (this.status === "closed") {
      return;
    }
    this.status = s;
    this.events.status?.(s, reason);
  }
}

function closedSocket(): SocketLike {
  return { readyState: 3, send() {}, close() {}, onopen: null, onmessage: null, onclose: null, onerror: null };
}
