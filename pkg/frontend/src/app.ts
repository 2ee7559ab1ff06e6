/**
 * Browser editor shell: four synchronized panes, layer list, falloff
 * sliders, and the rig overlay wired to the service client.
 *
 * Panes: (1) the edit view at the selected keypoint with the rig
 * overlay, (2) the same view rendered clean, (3) a free-orbit deformed
 * view, (4) the same orbit undeformed. All pixels come from the server;
 * the client only draws the rig wireframe and handle dots.
 *
 * Interaction is disabled while a mutation is in flight beyond the
 * optimistic echo; 400/409/422 diagnostics land in the status bar and
 * never drop local state.
 */

import { EditorClient, ServiceError } from "./client.js";
import { OrbitState } from "./orbit.js";
import {
  DragState,
  dragTransform,
  drawOverlay,
  RigOverlay,
  Throttle,
} from "./overlay.js";
import type { Affine2x3, KeypointMeta } from "./protocol.js";

const PREVIEW_RES = 400;

interface Pane {
  img: HTMLImageElement;
  url: string | null;
}

export class EditorApp {
  private client: EditorClient;
  private orbit = new OrbitState();
  private overlays = new Map<number, RigOverlay>();
  private selected = -1;
  private keypoints: KeypointMeta[] = [];
  private drag: DragState | null = null;
  private dragThrottle: Throttle<[Affine2x3[]]>;
  private panes: Record<string, Pane> = {};

  constructor(
    private readonly root: HTMLElement,
    baseUrl: string,
  ) {
    this.client = new EditorClient(baseUrl);
    this.dragThrottle = new Throttle((transforms) => {
      void this.pushTransforms(transforms);
    });
    this.buildDom();
  }

  async start(): Promise<void> {
    const meta = await this.client.meta();
    this.keypoints = meta.keypoints;
    this.renderLayerList();
    await this.refreshFreeViews();
    this.status(`connected: ${meta.model.primitives} ${meta.model.type}`);
  }

  // -- layer operations ------------------------------------------------------

  async addKeypointAtOrbit(): Promise<void> {
    await this.guarded(async () => {
      const meta = await this.client.meta();
      const resp = await this.client.addKeypoint({
        az: this.orbit.azimuthDeg,
        pol: this.orbit.polarDeg,
        radius: meta.orbit_radius,
      });
      this.overlays.set(resp.index, new RigOverlay(resp.rig));
      this.keypoints = (await this.client.meta()).keypoints;
      this.selected = resp.index;
      this.renderLayerList();
      await this.refreshAllPanes();
    });
  }

  async deleteSelected(): Promise<void> {
    if (this.selected < 0) return;
    const i = this.selected;
    await this.guarded(async () => {
      await this.client.deleteKeypoint(i);
      this.overlays.delete(i);
      // remaining overlays shift down past the gap, same as the server
      const shifted = new Map<number, RigOverlay>();
      for (const [j, ov] of this.overlays) shifted.set(j < i ? j : j - 1, ov);
      this.overlays = shifted;
      this.keypoints = (await this.client.meta()).keypoints;
      this.selected = Math.min(i, this.keypoints.length - 1);
      this.renderLayerList();
      await this.refreshAllPanes();
    });
  }

  async saveDocument(path: string): Promise<void> {
    await this.guarded(async () => {
      const resp = await this.client.save(path);
      this.status(`saved to ${resp.path}`);
    });
  }

  // -- rig overlay interaction -----------------------------------------------

  private onOverlayPointerDown(ev: PointerEvent): void {
    const ov = this.overlays.get(this.selected);
    if (!ov || this.client.mutationInFlight) return;
    const [x, y] = this.canvasXY(ev);

    const h = ov.hitHandle(x, y);
    if (h >= 0) {
      this.drag = {
        handleIndex: h,
        startX: x,
        startY: y,
        baseTransform: ov.transforms[h].map((r) => [...r]) as Affine2x3,
        restPosition: [...ov.rig.rest_vertices[ov.handleIndices[h]]] as [number, number],
        rotate: ev.shiftKey,
      };
      return;
    }
    const vtx = ov.hitVertex(x, y);
    if (vtx >= 0) void this.toggleHandle(vtx);
  }

  private onOverlayPointerMove(ev: PointerEvent): void {
    const ov = this.overlays.get(this.selected);
    if (!ov || !this.drag) return;
    const [x, y] = this.canvasXY(ev);
    ov.transforms[this.drag.handleIndex] = dragTransform(this.drag, x, y);
    this.redrawOverlay();
    this.dragThrottle.call(ov.transforms.map((t) => t.map((r) => [...r])) as Affine2x3[]);
  }

  private onOverlayPointerUp(): void {
    if (!this.drag) return;
    this.drag = null;
    this.dragThrottle.flush();
  }

  private async toggleHandle(vertex: number): Promise<void> {
    const ov = this.overlays.get(this.selected);
    if (!ov) return;
    const next = ov.handleIndices.includes(vertex)
      ? ov.handleIndices.filter((v) => v !== vertex)
      : [...ov.handleIndices, vertex];
    if (next.length === 0) return; // the server requires at least one handle
    await this.guarded(async () => {
      await this.client.setHandles(this.selected, next);
      ov.setHandles(next);
      ov.ackDeformed(ov.rig.rest_vertices.map((v) => [...v]) as [number, number][]);
      this.redrawOverlay();
      await this.refreshKeypointPanes();
    });
  }

  private async pushTransforms(transforms: Affine2x3[]): Promise<void> {
    try {
      const resp = await this.client.setTransforms(this.selected, transforms);
      const ov = this.overlays.get(this.selected);
      if (ov) {
        ov.ackDeformed(resp.deformed_vertices);
        this.redrawOverlay();
      }
      this.setPaneB64("edit", resp.preview_png_b64);
      await this.refreshFreeViews();
    } catch (e) {
      this.surface(e);
    }
  }

  private async setSigmas(sigmaAz: number, sigmaPol: number): Promise<void> {
    if (this.selected < 0) return;
    await this.guarded(async () => {
      await this.client.setSigmas(this.selected, sigmaAz, sigmaPol);
      await this.refreshFreeViews();
    });
  }

  // -- panes -----------------------------------------------------------------

  private async refreshAllPanes(): Promise<void> {
    await this.refreshKeypointPanes();
    await this.refreshFreeViews();
  }

  private async refreshKeypointPanes(): Promise<void> {
    if (this.selected < 0) return;
    const k = this.keypoints[this.selected];
    const png = await this.client.preview(k.azimuth_deg, k.polar_deg, PREVIEW_RES);
    this.setPanePng("edit", png);
    this.setPanePng("clean", png.slice(0));
    this.redrawOverlay();
  }

  private async refreshFreeViews(): Promise<void> {
    const { azimuthDeg: az, polarDeg: pol } = this.orbit;
    const [deformed, undeformed] = await Promise.all([
      this.client.preview(az, pol, PREVIEW_RES, false),
      this.client.preview(az, pol, PREVIEW_RES, true),
    ]);
    this.setPanePng("free", deformed);
    this.setPanePng("free-rest", undeformed);
  }

  private onFreeViewDrag(dx: number, dy: number): void {
    this.orbit.rotate(dx, dy);
    void this.refreshFreeViews();
  }

  // -- plumbing --------------------------------------------------------------

  private async guarded(fn: () => Promise<void>): Promise<void> {
    this.root.classList.add("busy");
    try {
      await fn();
      this.status("ok");
    } catch (e) {
      this.surface(e);
    } finally {
      this.root.classList.remove("busy");
    }
  }

  private surface(e: unknown): void {
    if (e instanceof ServiceError) {
      const kind =
        e.status === 409 ? "stale session" : e.status === 422 ? "geometry" : "request";
      this.status(`${kind} error ${e.status}: ${e.detail}`);
    } else {
      this.status(String(e));
    }
  }

  private status(text: string): void {
    const bar = this.root.querySelector(".status");
    if (bar) bar.textContent = text;
  }

  private canvasXY(ev: PointerEvent): [number, number] {
    const el = ev.currentTarget as HTMLElement;
    const r = el.getBoundingClientRect();
    return [
      ((ev.clientX - r.left) / r.width) * PREVIEW_RES,
      ((ev.clientY - r.top) / r.height) * PREVIEW_RES,
    ];
  }

  private redrawOverlay(): void {
    const ov = this.overlays.get(this.selected);
    const canvas = this.root.querySelector<HTMLCanvasElement>(".rig-canvas");
    const ctx = canvas?.getContext("2d");
    if (!ov || !ctx) return;
    drawOverlay(ctx, ov, PREVIEW_RES, PREVIEW_RES);
  }

  private setPanePng(name: string, png: ArrayBuffer): void {
    const pane = this.panes[name];
    if (!pane) return;
    if (pane.url) URL.revokeObjectURL(pane.url);
    pane.url = URL.createObjectURL(new Blob([png], { type: "image/png" }));
    pane.img.src = pane.url;
  }

  private setPaneB64(name: string, b64: string): void {
    const pane = this.panes[name];
    if (!pane) return;
    if (pane.url) URL.revokeObjectURL(pane.url);
    pane.url = null;
    pane.img.src = `data:image/png;base64,${b64}`;
  }

  private renderLayerList(): void {
    const list = this.root.querySelector(".layers");
    if (!list) return;
    list.innerHTML = "";
    this.keypoints.forEach((k, i) => {
      const li = document.createElement("li");
      li.textContent =
        `#${i} az ${k.azimuth_deg.toFixed(1)} pol ${k.polar_deg.toFixed(1)} ` +
        `(${k.n_handles} handles)`;
      li.className = i === this.selected ? "selected" : "";
      li.onclick = () => {
        this.selected = i;
        this.renderLayerList();
        void this.refreshKeypointPanes();
      };
      list.appendChild(li);
    });
  }

  private buildDom(): void {
    this.root.innerHTML = `
      <div class="toolbar">
        <button class="add">add keypoint here</button>
        <button class="del">delete layer</button>
        <label>sigma az <input class="sigma-az" type="range" min="0.1" max="20" step="0.1" value="4"></label>
        <label>sigma pol <input class="sigma-pol" type="range" min="0.1" max="20" step="0.1" value="4"></label>
        <input class="save-path" value="edit.json">
        <button class="save">save</button>
      </div>
      <div class="panes">
        <figure><figcaption>edit view</figcaption>
          <div class="stack">
            <img class="pane-edit" width="${PREVIEW_RES}" height="${PREVIEW_RES}">
            <canvas class="rig-canvas" width="${PREVIEW_RES}" height="${PREVIEW_RES}"></canvas>
          </div>
        </figure>
        <figure><figcaption>keypoint view (clean)</figcaption>
          <img class="pane-clean" width="${PREVIEW_RES}" height="${PREVIEW_RES}"></figure>
        <figure><figcaption>free view (deformed)</figcaption>
          <img class="pane-free" width="${PREVIEW_RES}" height="${PREVIEW_RES}"></figure>
        <figure><figcaption>free view (undeformed)</figcaption>
          <img class="pane-free-rest" width="${PREVIEW_RES}" height="${PREVIEW_RES}"></figure>
      </div>
      <ul class="layers"></ul>
      <div class="status">connecting...</div>`;

    for (const name of ["edit", "clean", "free", "free-rest"]) {
      const img = this.root.querySelector<HTMLImageElement>(`.pane-${name}`);
      if (img) this.panes[name] = { img, url: null };
    }

    const canvas = this.root.querySelector<HTMLCanvasElement>(".rig-canvas");
    canvas?.addEventListener("pointerdown", (e) => this.onOverlayPointerDown(e));
    canvas?.addEventListener("pointermove", (e) => this.onOverlayPointerMove(e));
    canvas?.addEventListener("pointerup", () => this.onOverlayPointerUp());

    const free = this.panes["free"]?.img;
    let orbitDrag: [number, number] | null = null;
    free?.addEventListener("pointerdown", (e) => {
      orbitDrag = [e.clientX, e.clientY];
    });
    free?.addEventListener("pointermove", (e) => {
      if (!orbitDrag) return;
      this.onFreeViewDrag(e.clientX - orbitDrag[0], e.clientY - orbitDrag[1]);
      orbitDrag = [e.clientX, e.clientY];
    });
    free?.addEventListener("pointerup", () => {
      orbitDrag = null;
    });

    this.root.querySelector<HTMLButtonElement>(".add")!.onclick = () =>
      void this.addKeypointAtOrbit();
    this.root.querySelector<HTMLButtonElement>(".del")!.onclick = () =>
      void this.deleteSelected();
    this.root.querySelector<HTMLButtonElement>(".save")!.onclick = () => {
      const path = this.root.querySelector<HTMLInputElement>(".save-path")!.value;
      void this.saveDocument(path);
    };
    const sigmaAz = this.root.querySelector<HTMLInputElement>(".sigma-az")!;
    const sigmaPol = this.root.querySelector<HTMLInputElement>(".sigma-pol")!;
    const onSigma = () =>
      void this.setSigmas(Number(sigmaAz.value), Number(sigmaPol.value));
    sigmaAz.onchange = onSigma;
    sigmaPol.onchange = onSigma;
  }
}
