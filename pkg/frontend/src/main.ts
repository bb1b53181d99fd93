/** Operator console: wires the DOM to the gateway socket and the reducer. */

import { Backoff } from "./backoff.js";
import {
  chatTextCommand,
  jammerCommand,
  parseMessage,
  voiceCommand,
} from "./protocol.js";
import {
  applyConnection,
  applyLocalSend,
  applyMessage,
  initialState,
  type ConsoleState,
} from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

class OperatorConsole {
  private state: ConsoleState = initialState();
  private ws: WebSocket | null = null;
  private readonly backoff = new Backoff();
  private readonly url: string;

  private readonly banner = el<HTMLDivElement>("banner");
  private readonly nodeLabel = el<HTMLSpanElement>("node-label");
  private readonly channelLabel = el<HTMLSpanElement>("channel-label");
  private readonly jamAlert = el<HTMLSpanElement>("jam-alert");
  private readonly transcriptPane = el<HTMLDivElement>("transcript");
  private readonly eventsPane = el<HTMLDivElement>("events");
  private readonly spectrumPane = el<HTMLDivElement>("spectrum");
  private readonly sendForm = el<HTMLFormElement>("send-form");
  private readonly sendInput = el<HTMLInputElement>("send-input");
  private readonly voiceButton = el<HTMLButtonElement>("voice-button");
  private readonly jamEnabled = el<HTMLInputElement>("jammer-enabled");
  private readonly jamDwell = el<HTMLInputElement>("jammer-dwell");
  private readonly jamPower = el<HTMLInputElement>("jammer-power");
  private readonly jamApply = el<HTMLButtonElement>("jammer-apply");
  private readonly jamFeedback = el<HTMLSpanElement>("jammer-feedback");

  constructor() {
    const params = new URLSearchParams(window.location.search);
    const gateway = params.get("gateway") ?? `ws://${window.location.host}`;
    const node = params.get("node") ?? "8";
    this.url = `${gateway}/ws/${node}`;

    this.sendForm.addEventListener("submit", (ev) => {
      ev.preventDefault();
      this.sendText();
    });
    this.voiceButton.addEventListener("click", () => this.sendVoice());
    this.jamApply.addEventListener("click", () => this.applyJammer());
    this.connect();
  }

  private connect(): void {
    this.update(applyConnection(this.state, "connecting"));
    const ws = new WebSocket(this.url);
    this.ws = ws;
    ws.onopen = () => this.backoff.reset();
    ws.onmessage = (ev) => {
      const msg = parseMessage(String(ev.data));
      if (msg === null) {
        console.warn("dropped malformed gateway line:", ev.data);
        return;
      }
      this.update(applyMessage(this.state, msg));
    };
    ws.onclose = () => {
      if (this.ws !== ws) {
        return;
      }
      this.ws = null;
      this.update(applyConnection(this.state, "closed"));
      window.setTimeout(() => this.connect(), this.backoff.next());
    };
  }

  private sendRaw(line: string): boolean {
    if (this.ws === null || this.ws.readyState !== WebSocket.OPEN) {
      return false;
    }
    this.ws.send(line);
    return true;
  }

  private sendText(): void {
    const text = this.sendInput.value;
    if (text.length === 0) {
      return;
    }
    if (this.sendRaw(chatTextCommand(text))) {
      this.update(applyLocalSend(this.state, text));
      this.sendInput.value = "";
    }
  }

  private sendVoice(): void {
    this.sendRaw(voiceCommand(1));
  }

  private applyJammer(): void {
    try {
      const line = jammerCommand({
        enabled: this.jamEnabled.checked,
        dwellS: this.jamDwell.value === "" ? undefined : Number(this.jamDwell.value),
        powerDbm: this.jamPower.value === "" ? undefined : Number(this.jamPower.value),
      });
      this.jamFeedback.textContent = "";
      this.sendRaw(line);
    } catch (err) {
      this.jamFeedback.textContent = err instanceof Error ? err.message : String(err);
    }
  }

  private update(state: ConsoleState): void {
    this.state = state;
    this.render();
  }

  private render(): void {
    const s = this.state;
    this.banner.textContent =
      s.connection === "open"
        ? s.lastError ?? ""
        : `gateway ${s.connection}, retrying...`;
    this.banner.className = s.connection === "open" && !s.lastError ? "" : "warn";

    this.nodeLabel.textContent =
      s.node === null ? "?" : `node ${s.node} -> ${s.peer}`;
    this.channelLabel.textContent = s.channel === null ? "?" : String(s.channel);
    this.jamAlert.textContent = s.jamAlert ? "JAMMED" : "";

    this.transcriptPane.replaceChildren(
      ...s.transcript.map((t) => {
        const row = document.createElement("div");
        row.className = `line ${t.direction}`;
        row.textContent = `${t.direction === "sent" ? ">" : "<"} ${t.text}`;
        return row;
      }),
    );
    this.transcriptPane.scrollTop = this.transcriptPane.scrollHeight;

    this.eventsPane.replaceChildren(
      ...s.events.slice(-40).map((e) => {
        const row = document.createElement("div");
        row.className = e.event === "jam_detected" ? "event warn" : "event";
        row.textContent = `${e.ts.toFixed(3)}s node ${e.node} ${e.event} ${e.detail}`;
        return row;
      }),
    );
    this.eventsPane.scrollTop = this.eventsPane.scrollHeight;

    this.spectrumPane.replaceChildren(
      ...s.spectrum.map((v) => {
        const bar = document.createElement("div");
        bar.className = "bar";
        bar.style.height = `${Math.round(v * 100)}%`;
        return bar;
      }),
    );

    this.jamEnabled.checked = s.jammer.enabled;
    if (document.activeElement !== this.jamDwell) {
      this.jamDwell.value = String(s.jammer.dwellS);
    }
    if (document.activeElement !== this.jamPower) {
      this.jamPower.value = String(s.jammer.powerDbm);
    }
  }
}

new OperatorConsole();
