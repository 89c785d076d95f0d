/** Incremental parser for a text/event-stream byte feed.
 *
 * The console consumes the stream through fetch (EventSource cannot send the
 * Authorization header), so blocks may arrive split across chunks; feed()
 * buffers and yields only complete frames.
 */

export interface SseFrame {
  id: number | null;
  event: string;
  data: string;
}

export function parseSseBuffer(buffer: string): { frames: SseFrame[]; rest: string } {
  const frames: SseFrame[] = [];
  let rest = buffer;
  for (;;) {
    const cut = rest.indexOf("\n\n");
    if (cut < 0) break;
    const block = rest.slice(0, cut);
    rest = rest.slice(cut + 2);
    let id: number | null = null;
    let event = "message";
    const dataLines: string[] = [];
    for (const line of block.split("\n")) {
      if (line.startsWith(":")) continue; // keepalive comment
      const sep = line.indexOf(": ");
      if (sep < 0) continue;
      const field = line.slice(0, sep);
      const value = line.slice(sep + 2);
      if (field === "id") id = Number(value);
      else if (field === "event") event = value;
      else if (field === "data") dataLines.push(value);
    }
    if (dataLines.length > 0) {
      frames.push({ id, event, data: dataLines.join("\n") });
    }
  }
  return { frames, rest };
}

export class SseFeed {
  private buffer = "";

  feed(chunk: string): SseFrame[] {
    this.buffer += chunk;
    const { frames, rest } = parseSseBuffer(this.buffer);
    this.buffer = rest;
    return frames;
  }
}
