/**
 * Editor service client with optimistic concurrency and a replayable
 * request log.
 *
 * All state changes go through the documented endpoints — nothing else.
 * Mutations are serialized client-side (at most one in flight, the rest
 * queued) and every accepted mutation is appended to the request log,
 * so a session can be reproduced on a fresh server by replaying the log
 * in order. Preview fetches are reads and may run concurrently.
 *
 * On a 409 (stale revision) the client resyncs its revision from /meta
 * and rejects the call with a ServiceError; local UI state is the
 * caller's to keep — the client itself loses nothing.
 */

import type {
  Affine2x3,
  HandlesResponse,
  KeypointResponse,
  Meta,
  RevisionResponse,
  SaveResponse,
  TransformsResponse,
} from "./protocol.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ServiceError";
  }
}

/** One replayable mutation: everything but the revision it carried. */
export interface LoggedRequest {
  method: "POST" | "DELETE";
  path: string;
  /** Body without the revision field; null for DELETE. */
  body: Record<string, unknown> | null;
}

interface MutationBody {
  [key: string]: unknown;
}

export class EditorClient {
  private revision = 0;
  private readonly log: LoggedRequest[] = [];
  private chain: Promise<unknown> = Promise.resolve();
  private inFlight = 0;

  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (u, i) => fetch(u, i),
  ) {}

  /** Last server-confirmed revision. */
  get currentRevision(): number {
    return this.revision;
  }

  /** True while a mutation is running (drives UI interaction locking). */
  get mutationInFlight(): boolean {
    return this.inFlight > 0;
  }

  /** Copy of the accepted-mutation log, oldest first. */
  get requestLog(): LoggedRequest[] {
    return this.log.map((r) => ({ ...r, body: r.body ? { ...r.body } : null }));
  }

  async meta(): Promise<Meta> {
    const m = await this.getJson<Meta>("/meta");
    this.revision = m.revision;
    return m;
  }

  addKeypoint(body: {
    az: number;
    pol: number;
    radius: number;
    sigma_az?: number;
    sigma_pol?: number;
    depth_cut?: number | null;
  }): Promise<KeypointResponse> {
    return this.mutate<KeypointResponse>("POST", "/keypoint", body);
  }

  setHandles(
    index: number,
    vertexIndices: number[],
    method: "harmonic" | "bounded_biharmonic" = "harmonic",
  ): Promise<HandlesResponse> {
    return this.mutate<HandlesResponse>("POST", `/keypoint/${index}/handles`, {
      vertex_indices: vertexIndices,
      method,
    });
  }

  setTransforms(index: number, transforms: Affine2x3[]): Promise<TransformsResponse> {
    return this.mutate<TransformsResponse>("POST", `/keypoint/${index}/transforms`, {
      transforms,
    });
  }

  setSigmas(index: number, sigmaAz: number, sigmaPol: number): Promise<RevisionResponse> {
    return this.mutate<RevisionResponse>("POST", `/keypoint/${index}/sigmas`, {
      sigma_az: sigmaAz,
      sigma_pol: sigmaPol,
    });
  }

  deleteKeypoint(index: number): Promise<RevisionResponse> {
    return this.mutate<RevisionResponse>("DELETE", `/keypoint/${index}`, null);
  }

  /** Save is logged too: replaying the log reproduces the saved file. */
  save(path: string): Promise<SaveResponse> {
    return this.mutate<SaveResponse>("POST", "/save", { path }, /*revisioned=*/ false);
  }

  /** Fetch a rendered preview as a PNG blob URL-ready ArrayBuffer. */
  async preview(
    az: number,
    pol: number,
    res = 400,
    undeformed = false,
  ): Promise<ArrayBuffer> {
    const q = `az=${az}&pol=${pol}&res=${res}&undeformed=${undeformed ? 1 : 0}`;
    const resp = await this.fetchImpl(`${this.baseUrl}/preview?${q}`, {
      headers: { accept: "image/png" },
    });
    if (!resp.ok) throw await this.toError(resp);
    return resp.arrayBuffer();
  }

  // -- internals -------------------------------------------------------------

  /**
   * Run one mutation, serialized behind any queued ones. The revision
   * is injected at send time (not queue time) so queued mutations pick
   * up the revision their predecessors produced.
   */
  private mutate<T extends { revision: number }>(
    method: "POST" | "DELETE",
    path: string,
    body: MutationBody | null,
    revisioned = true,
  ): Promise<T> {
    const run = async (): Promise<T> => {
      this.inFlight += 1;
      try {
        let url = `${this.baseUrl}${path}`;
        const init: RequestInit = { method };
        if (method === "DELETE") {
          url += `?revision=${this.revision}`;
        } else {
          const sent = revisioned ? { revision: this.revision, ...body } : body;
          init.headers = { "content-type": "application/json" };
          init.body = JSON.stringify(sent);
        }
        const resp = await this.fetchImpl(url, init);
        if (!resp.ok) {
          const err = await this.toError(resp);
          if (err.status === 409) await this.resyncRevision();
          throw err;
        }
        const data = (await resp.json()) as T;
        this.revision = data.revision;
        this.log.push({ method, path, body: body ? { ...body } : null });
        return data;
      } finally {
        this.inFlight -= 1;
      }
    };
    const next = this.chain.then(run, run);
    // keep the chain alive whether or not this mutation succeeds
    this.chain = next.catch(() => undefined);
    return next;
  }

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, {
      headers: { accept: "application/json" },
    });
    if (!resp.ok) throw await this.toError(resp);
    return (await resp.json()) as T;
  }

  private async resyncRevision(): Promise<void> {
    try {
      const m = await this.getJson<Meta>("/meta");
      this.revision = m.revision;
    } catch {
      // the next mutation will surface the connectivity problem
    }
  }

  private async toError(resp: Response): Promise<ServiceError> {
    let detail = resp.statusText || `status ${resp.status}`;
    try {
      const data = (await resp.json()) as { detail?: unknown };
      if (typeof data.detail === "string") detail = data.detail;
      else if (data.detail !== undefined) detail = JSON.stringify(data.detail);
    } catch {
      // non-JSON error body; keep the status text
    }
    return new ServiceError(resp.status, detail);
  }
}

/**
 * Replay a request log against a fresh session. Revisions are supplied
 * by the replaying client, not taken from the log: the server is
 * deterministic, so an accepted sequence replayed in order reproduces
 * the original session (and any saved document) byte for byte.
 */
export async function replayLog(
  log: LoggedRequest[],
  baseUrl: string,
  fetchImpl?: FetchLike,
): Promise<EditorClient> {
  const client = new EditorClient(baseUrl, fetchImpl);
  await client.meta();
  for (const entry of log) {
    if (entry.method === "DELETE") {
      const index = Number(entry.path.split("/")[2]);
      await client.deleteKeypoint(index);
      continue;
    }
    if (entry.path === "/keypoint") {
      await client.addKeypoint(entry.body as Parameters<EditorClient["addKeypoint"]>[0]);
    } else if (entry.path === "/save") {
      await client.save((entry.body as { path: string }).path);
    } else {
      const parts = entry.path.split("/"); // ["", "keypoint", i, verb]
      const index = Number(parts[2]);
      const body = entry.body as Record<string, unknown>;
      if (parts[3] === "handles") {
        await client.setHandles(
          index,
          body.vertex_indices as number[],
          body.method as "harmonic" | "bounded_biharmonic",
        );
      } else if (parts[3] === "transforms") {
        await client.setTransforms(index, body.transforms as Affine2x3[]);
      } else if (parts[3] === "sigmas") {
        await client.setSigmas(index, body.sigma_az as number, body.sigma_pol as number);
      } else {
        throw new Error(`unknown logged path: ${entry.path}`);
      }
    }
  }
  return client;
}
