import { ApiClient } from "./api.js";
import { SyncedView } from "./compare.js";
import { SessionController, heatmapStrip } from "./session.js";
import type { SessionSnapshot } from "./session.js";
import type { GalleryIdentity, HistoryEntry } from "./types.js";

const api = new ApiClient("");
const session = new SessionController(api);

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function imgFromB64(b64: string, cls: string): HTMLImageElement {
  const img = document.createElement("img");
  img.src = `data:image/png;base64,${b64}`;
  img.className = cls;
  return img;
}

async function fileToB64(file: File): Promise<string> {
  const buf = new Uint8Array(await file.arrayBuffer());
  let binary = "";
  for (const byte of buf) binary += String.fromCharCode(byte);
  return btoa(binary);
}

// ---------------------------------------------------------------------------
// gallery

let selectedSlot = 0;

async function loadGallery(): Promise<void> {
  const banner = el<HTMLDivElement>("banner");
  const grid = el<HTMLDivElement>("gallery");
  banner.hidden = true;
  grid.textContent = "loading gallery…";
  try {
    const health = await session.connect();
    el<HTMLSpanElement>("model-info").textContent =
      `model ${health.model} · x${health.scale} · ${health.k} exemplar slots`;
    const { identities } = await api.identities();
    renderGallery(identities);
  } catch (err) {
    grid.textContent = "";
    banner.hidden = false;
    banner.querySelector("span")!.textContent =
      `cannot reach the inference service: ${err instanceof Error ? err.message : err}`;
  }
}

function renderGallery(identities: GalleryIdentity[]): void {
  const grid = el<HTMLDivElement>("gallery");
  grid.textContent = "";
  if (identities.length === 0) {
    grid.textContent = "the gallery is empty — add identity folders and restart";
    return;
  }
  for (const ident of identities) {
    const card = document.createElement("div");
    card.className = "identity-card";
    const thumb = document.createElement("img");
    thumb.src = ident.thumbnail;
    thumb.title = `${ident.identity} (${ident.count} images)`;
    card.append(thumb, document.createTextNode(ident.identity));
    card.addEventListener("click", () => expandIdentity(ident.identity, card));
    grid.append(card);
  }
}

async function expandIdentity(identity: string, card: HTMLElement): Promise<void> {
  document.querySelectorAll(".exemplar-row").forEach((n) => n.remove());
  const row = document.createElement("div");
  row.className = "exemplar-row";
  const { images } = await api.exemplars(identity);
  for (const name of images) {
    const pick = document.createElement("img");
    pick.src = api.exemplarImageUrl(identity, name);
    pick.title = `${identity}/${name} → slot ${selectedSlot + 1}`;
    pick.addEventListener("click", () => {
      session.fillSlot(selectedSlot, `${identity}/${name}`);
      selectedSlot = (selectedSlot + 1) % session.k;
    });
    row.append(pick);
  }
  card.after(row);
}

// ---------------------------------------------------------------------------
// session rendering

function renderSnapshot(snap: SessionSnapshot): void {
  const tray = el<HTMLDivElement>("slots");
  tray.textContent = "";
  snap.slots.forEach((ref, i) => {
    const slot = document.createElement("div");
    slot.className = "slot" + (i === selectedSlot ? " selected" : "");
    slot.textContent = ref ?? `slot ${i + 1}`;
    if (ref && ref.length > 40) slot.textContent = `slot ${i + 1}: uploaded`;
    slot.addEventListener("click", () => {
      selectedSlot = i;
      renderSnapshot(session.snapshot());
    });
    const clear = document.createElement("button");
    clear.textContent = "×";
    clear.addEventListener("click", (ev) => {
      ev.stopPropagation();
      session.clearSlot(i);
    });
    if (ref) slot.append(clear);
    tray.append(slot);
  });

  el<HTMLButtonElement>("run").disabled = !session.ready || snap.phase === "running";
  el<HTMLButtonElement>("cancel").hidden = snap.phase !== "running";
  el<HTMLDivElement>("progress").hidden = snap.phase !== "running";

  const errBox = el<HTMLDivElement>("run-error");
  errBox.hidden = snap.error === null;
  if (snap.error) errBox.textContent = snap.error;

  renderHistory(snap);
  renderCompare(snap);
}

function renderHistory(snap: SessionSnapshot): void {
  const list = el<HTMLDivElement>("history");
  list.textContent = "";
  for (const entry of [...snap.history].reverse()) {
    const card = document.createElement("div");
    card.className = "history-entry";
    card.append(imgFromB64(entry.response.sr_image, "sr-thumb"));

    const meta = document.createElement("div");
    meta.className = "entry-meta";
    meta.textContent =
      `#${entry.id} · ${entry.exemplarRefs.length} exemplars · ` +
      `${entry.response.latency_ms.toFixed(0)} ms`;
    card.append(meta);

    if (snap.showHeatmaps) {
      const strip = document.createElement("div");
      strip.className = "heatmap-strip";
      for (const url of heatmapStrip(entry)) {
        const overlay = document.createElement("img");
        overlay.src = url;
        overlay.className = "heatmap";
        strip.append(overlay);
      }
      card.append(strip);
    }

    const compareBtn = document.createElement("button");
    compareBtn.textContent = "compare with latest";
    compareBtn.addEventListener("click", () => {
      const latest = snap.history[snap.history.length - 1];
      session.setComparePair(entry.id, latest.id);
    });
    card.append(compareBtn);
    list.append(card);
  }
}

// ---------------------------------------------------------------------------
// compare view

const sync = new SyncedView();

function renderCompare(snap: SessionSnapshot): void {
  const box = el<HTMLDivElement>("compare");
  box.hidden = snap.comparePair === null;
  if (!snap.comparePair) return;
  const [a, b] = snap.comparePair;
  const left = session.entry(a);
  const right = session.entry(b);
  if (!left || !right) return;
  paintPane(el<HTMLDivElement>("pane-a"), left);
  paintPane(el<HTMLDivElement>("pane-b"), right);
}

function paintPane(pane: HTMLDivElement, entry: HistoryEntry): void {
  pane.textContent = "";
  const img = imgFromB64(entry.response.sr_image, "compare-img");
  img.style.transform = sync.cssTransform();
  const label = document.createElement("div");
  label.className = "entry-meta";
  label.textContent = `#${entry.id}: ${entry.exemplarRefs.join(", ")}`;
  pane.append(img, label);
}

function bindCompareControls(): void {
  // one shared listener drives whatever images are currently mounted
  sync.subscribe(() => {
    document
      .querySelectorAll<HTMLImageElement>(".compare-img")
      .forEach((img) => (img.style.transform = sync.cssTransform()));
  });
  for (const id of ["pane-a", "pane-b"]) {
    const pane = el<HTMLDivElement>(id);
    pane.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      sync.zoom(ev.deltaY < 0 ? 1.2 : 1 / 1.2, ev.offsetX, ev.offsetY);
    });
    let dragging = false;
    pane.addEventListener("pointerdown", () => (dragging = true));
    pane.addEventListener("pointerup", () => (dragging = false));
    pane.addEventListener("pointermove", (ev) => {
      if (dragging) sync.pan(ev.movementX, ev.movementY);
    });
  }
}

// ---------------------------------------------------------------------------
// wiring

export function start(): void {
  session.subscribe(renderSnapshot);
  loadGallery();
  bindCompareControls();

  el<HTMLButtonElement>("retry").addEventListener("click", loadGallery);
  el<HTMLButtonElement>("run").addEventListener("click", () => void session.run());
  el<HTMLButtonElement>("cancel").addEventListener("click", () => session.cancel());
  el<HTMLInputElement>("heatmap-toggle").addEventListener("change", () =>
    session.toggleHeatmaps(),
  );
  el<HTMLButtonElement>("clear-session").addEventListener("click", () =>
    session.clearSession(),
  );
  el<HTMLButtonElement>("compare-close").addEventListener("click", () => {
    el<HTMLDivElement>("compare").hidden = true;
  });

  el<HTMLInputElement>("lr-upload").addEventListener("change", async (ev) => {
    const input = ev.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    const b64 = await fileToB64(file);
    session.setLrImage(b64);
    el<HTMLImageElement>("lr-preview").src = `data:image/png;base64,${b64}`;
  });

  el<HTMLInputElement>("exemplar-upload").addEventListener("change", async (ev) => {
    const input = ev.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    session.fillSlot(selectedSlot, await fileToB64(file));
    selectedSlot = (selectedSlot + 1) % session.k;
  });
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  start();
}
