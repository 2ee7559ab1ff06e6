import { describe, expect, it } from "vitest";

import { EditorClient, replayLog, ServiceError } from "../src/client.js";
import { translationAffine } from "../src/protocol.js";
import { FakeService, GEOMETRY_FAIL_AZ } from "./fake-service.js";

function makeClient(service: FakeService): EditorClient {
  return new EditorClient("http://fake", service.fetch);
}

describe("EditorClient", () => {
  it("tracks revisions across mutations", async () => {
    const svc = new FakeService();
    const client = makeClient(svc);
    await client.meta();
    expect(client.currentRevision).toBe(0);

    const kp = await client.addKeypoint({ az: 0, pol: 90, radius: 3 });
    expect(kp.index).toBe(0);
    expect(client.currentRevision).toBe(1);

    await client.setHandles(0, [0, 1, 2]);
    expect(client.currentRevision).toBe(2);
  });

  it("queues mutations so each carries its predecessor's revision", async () => {
    const svc = new FakeService();
    const client = makeClient(svc);
    await client.meta();
    // fire three mutations without awaiting; none may get a 409
    const results = await Promise.all([
      client.addKeypoint({ az: 0, pol: 90, radius: 3 }),
      client.setHandles(0, [0]),
      client.setSigmas(0, 2, 2),
    ]);
    expect(results.map((r) => r.revision)).toEqual([1, 2, 3]);
  });

  it("surfaces a 409 and resyncs without losing later mutations", async () => {
    const svc = new FakeService();
    const client = makeClient(svc);
    await client.meta();
    await client.addKeypoint({ az: 0, pol: 90, radius: 3 });

    // another writer bumps the server behind this client's back
    svc.revision += 5;

    await expect(client.setSigmas(0, 1, 1)).rejects.toMatchObject({
      name: "ServiceError",
      status: 409,
    });
    // resynced from /meta: the next mutation goes through
    const r = await client.setSigmas(0, 1, 1);
    expect(r.revision).toBe(svc.revision);
  });

  it("surfaces 400 with the server detail", async () => {
    const svc = new FakeService();
    const client = makeClient(svc);
    await client.meta();
    await client.addKeypoint({ az: 0, pol: 90, radius: 3 });
    const err = await client
      .setTransforms(0, [translationAffine(1, 2)])
      .catch((e: ServiceError) => e);
    expect(err).toBeInstanceOf(ServiceError);
    expect((err as ServiceError).status).toBe(400);
    expect((err as ServiceError).detail).toContain("no handles");
  });

  it("surfaces 422 geometry failures and keeps the session usable", async () => {
    const svc = new FakeService();
    const client = makeClient(svc);
    await client.meta();
    await expect(
      client.addKeypoint({ az: GEOMETRY_FAIL_AZ, pol: 90, radius: 3 }),
    ).rejects.toMatchObject({ status: 422 });
    // state intact: a valid request still works at the same revision
    const kp = await client.addKeypoint({ az: 10, pol: 90, radius: 3 });
    expect(kp.index).toBe(0);
  });

  it("logs accepted mutations only, without revisions", async () => {
    const svc = new FakeService();
    const client = makeClient(svc);
    await client.meta();
    await client.addKeypoint({ az: 0, pol: 90, radius: 3 });
    await client
      .addKeypoint({ az: GEOMETRY_FAIL_AZ, pol: 90, radius: 3 })
      .catch(() => undefined);
    await client.setHandles(0, [1, 2]);
    await client.preview(0, 90); // reads are not logged

    const log = client.requestLog;
    expect(log.map((e) => e.path)).toEqual(["/keypoint", "/keypoint/0/handles"]);
    for (const entry of log) {
      expect(entry.body).not.toHaveProperty("revision");
    }
  });

  it("replays its request log into an identical document", async () => {
    const svc = new FakeService();
    const client = makeClient(svc);
    await client.meta();
    await client.addKeypoint({ az: 15, pol: 80, radius: 3 });
    await client.setHandles(0, [0, 2]);
    await client.setTransforms(0, [translationAffine(12, -7), translationAffine(0, 5)]);
    await client.setSigmas(0, 6, 3);
    await client.addKeypoint({ az: 120, pol: 90, radius: 3 });
    await client.deleteKeypoint(1);
    await client.save("a.json");

    const fresh = new FakeService();
    await replayLog(client.requestLog, "http://fake", fresh.fetch);
    expect(fresh.saved.get("a.json")).toBe(svc.saved.get("a.json"));
    expect(fresh.document()).toBe(svc.document());
  });

  it("reports mutationInFlight while a request is pending", async () => {
    const svc = new FakeService();
    let release: () => void = () => undefined;
    const gate = new Promise<void>((r) => (release = r));
    const slowFetch: typeof svc.fetch = async (url, init) => {
      if (init?.method === "POST") await gate;
      return svc.fetch(url, init);
    };
    const client = new EditorClient("http://fake", slowFetch);
    await client.meta();
    const p = client.addKeypoint({ az: 0, pol: 90, radius: 3 });
    await Promise.resolve(); // the queued mutation starts on the next microtask
    expect(client.mutationInFlight).toBe(true);
    release();
    await p;
    expect(client.mutationInFlight).toBe(false);
  });
});
