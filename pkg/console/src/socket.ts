// Session socket wrapper: parse, dispatch, offline signaling.

import { ClientMessage, parseServerMessage, serialize, ServerMessage } from "./protocol.js";

export class SessionSocket {
  private ws: WebSocket | null = null;
  onMessage: (msg: ServerMessage) => void = () => {};
  onOffline: () => void = () => {};
  onOnline: () => void = () => {};

  constructor(private url: string) {}

  connect(): void {
    this.ws = new WebSocket(this.url);
    this.ws.onopen = () => this.onOnline();
    this.ws.onmessage = (ev) => {
      try {
        this.onMessage(parseServerMessage(String(ev.data)));
      } catch (err) {
        console.warn("unparseable server message", err);
      }
    };
    this.ws.onclose = () => {
      this.ws = null;
      this.onOffline();
    };
  }

  send(msg: ClientMessage): boolean {
    if (!this.ws || this.ws.readyState !== WebSocket.OPEN) return false;
    this.ws.send(serialize(msg));
    return true;
  }

  get connected(): boolean {
    return this.ws !== null && this.ws.readyState === WebSocket.OPEN;
  }
}
