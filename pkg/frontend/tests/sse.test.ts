import { describe, expect, it } from "vitest";

import { SseFeed, parseSseBuffer } from "../src/sse.js";

describe("SSE parsing", () => {
  it("parses a complete frame", () => {
    const { frames, rest } = parseSseBuffer(
      'id: 3\nevent: record\ndata: {"seq":3}\n\n',
    );
    expect(frames).toEqual([{ id: 3, event: "record", data: '{"seq":3}' }]);
    expect(rest).toBe("");
  });

  it("keeps incomplete trailing frames buffered", () => {
    const feed = new SseFeed();
    expect(feed.feed("id: 1\nevent: rec")).toEqual([]);
    expect(feed.feed('ord\ndata: {"a":1}\n')).toEqual([]);
    const frames = feed.feed("\nid: 2\n");
    expect(frames).toHaveLength(1);
    expect(frames[0].id).toBe(1);
    expect(JSON.parse(frames[0].data)).toEqual({ a: 1 });
  });

  it("ignores keepalive comments", () => {
    const feed = new SseFeed();
    expect(feed.feed(": keepalive\n\n")).toEqual([]);
    expect(feed.feed(': keepalive\n\nid: 9\nevent: gap\ndata: {}\n\n')).toHaveLength(1);
  });

  it("handles multiple frames per chunk in order", () => {
    const feed = new SseFeed();
    const frames = feed.feed(
      'id: 1\nevent: record\ndata: {"seq":1}\n\nid: 2\nevent: record\ndata: {"seq":2}\n\n',
    );
    expect(frames.map((f) => f.id)).toEqual([1, 2]);
  });
});
