/** Page entry point: wires the socket, input devices, canvas and recording buttons. */

import { DEFAULT_BINDING, InputLimiter, combineAxes, gamepadAxes, keyboardAxes } from "./input.js";
import type { Vec3 } from "./protocol.js";
import { DEFAULT_VIEW, drawScene, type Canvas2D } from "./render.js";
import { SceneModel } from "./scene.js";
import { SessionClient } from "./session.js";

const $ = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;

function start(): void {
  const canvas = $<HTMLCanvasElement>("scene");
  const ctx = canvas.getContext("2d") as unknown as Canvas2D;
  const banner = $("banner");
  const inlineError = $("error");
  const counter = $("demos");
  const lastDuration = $("last-duration");
  const startBtn = $<HTMLButtonElement>("start");
  const stopBtn = $<HTMLButtonElement>("stop");
  const resetBtn = $<HTMLButtonElement>("reset");
  const outcome = () => {
    const checked = document.querySelector<HTMLInputElement>('input[name="outcome"]:checked');
    return checked === null ? null : checked.value === "success";
  };

  const pressed = new Set<string>();
  window.addEventListener("keydown", (e) => pressed.add(e.code));
  window.addEventListener("keyup", (e) => pressed.delete(e.code));
  window.addEventListener("blur", () => pressed.clear());

  let scene: SceneModel | null = null;
  let axes: Vec3 = [0, 0, 0];
  const limiter = new InputLimiter(30);
  const client = new SessionClient(`ws://${location.host}/session`, {
    status: (s, reason) => {
      banner.hidden = s === "open";
      banner.textContent = s === "closed" ? `Disconnected: ${reason ?? "unknown"}` : "Connecting…";
    },
    hello: (h) => {
      scene = new SceneModel(1 / h.state_rate);
    },
    state: (f) => scene?.push(f, performance.now()),
    error: (m) => {
      inlineError.textContent = m;
    },
    recorded: (_id, duration) => {
      counter.textContent = String(client.demoCount);
      lastDuration.textContent = `${duration.toFixed(2)} s`;
    },
  });

  startBtn.onclick = () => client.startRecording();
  stopBtn.onclick = () => client.stopRecording(outcome());
  resetBtn.onclick = () => client.reset();

  const frame = (now: number) => {
    const pad = navigator.getGamepads?.().find((g) => g !== null) ?? null;
    const padAxes = pad === null ? null : gamepadAxes(pad.axes, DEFAULT_BINDING);
    axes = combineAxes(padAxes, keyboardAxes(pressed, DEFAULT_BINDING));
    if (client.inputEnabled) {
      const out = limiter.offer(axes, now);
      if (out !== null) client.sendAxes(out);
    }
    startBtn.disabled = !client.inputEnabled || client.recording;
    stopBtn.disabled = !client.inputEnabled || !client.recording;
    resetBtn.disabled = !client.inputEnabled || client.recording;
    if (client.hello !== null) {
      drawScene(ctx, DEFAULT_VIEW, client.hello.geometry, scene?.sample(now) ?? null, {
        axes,
        limits: client.hello.wrench_limits,
      });
    }
    requestAnimationFrame(frame);
  };
  requestAnimationFrame(frame);
}

start();
