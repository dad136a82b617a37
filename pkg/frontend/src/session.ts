import { ApiClient } from "./api.js";
import type { EditResponse, Health, HistoryEntry } from "./types.js";

export type SessionPhase = "idle" | "running" | "error";

export type SessionSnapshot = {
  phase: SessionPhase;
  k: number;
  slots: (string | null)[];
  lrImage: string | null;
  history: HistoryEntry[];
  error: string | null;
  showHeatmaps: boolean;
  comparePair: [number, number] | null;
};

type Listener = (snap: SessionSnapshot) => void;

/**
 * One user's editing session: an LR input, K exemplar slots, and an
 * append-only history of runs.
 *
 * At most one inference request is in flight; submitting a new run aborts
 * the old request, and responses that no longer match the latest
 * submission are discarded, so the UI can never show a stale result.
 */
export class SessionController {
  private slots: (string | null)[] = [];
  private lrImage: string | null = null;
  private history: HistoryEntry[] = [];
  private phase: SessionPhase = "idle";
  private error: string | null = null;
  private showHeatmaps = false;
  private comparePair: [number, number] | null = null;

  private health: Health | null = null;
  private listeners: Listener[] = [];
  private runToken = 0;
  private inflight: AbortController | null = null;
  private nextEntryId = 1;

  constructor(private readonly api: ApiClient) {}

  async connect(): Promise<Health> {
    const health = await this.api.health();
    this.health = health;
    if (this.slots.length !== health.k) {
      this.slots = new Array(health.k).fill(null);
    }
    this.emit();
    return health;
  }

  get k(): number {
    return this.health?.k ?? this.slots.length;
  }

  snapshot(): SessionSnapshot {
    return {
      phase: this.phase,
      k: this.k,
      slots: [...this.slots],
      lrImage: this.lrImage,
      history: [...this.history],
      error: this.error,
      showHeatmaps: this.showHeatmaps,
      comparePair: this.comparePair,
    };
  }

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private emit(): void {
    const snap = this.snapshot();
    for (const fn of this.listeners) fn(snap);
  }

  setLrImage(imageB64: string | null): void {
    this.lrImage = imageB64;
    this.emit();
  }

  fillSlot(index: number, ref: string): void {
    if (index < 0 || index >= this.slots.length) {
      throw new RangeError(`slot ${index} out of range`);
    }
    this.slots[index] = ref;
    this.emit();
  }

  clearSlot(index: number): void {
    if (index < 0 || index >= this.slots.length) {
      throw new RangeError(`slot ${index} out of range`);
    }
    this.slots[index] = null;
    this.emit();
  }

  toggleHeatmaps(): void {
    this.showHeatmaps = !this.showHeatmaps;
    this.emit();
  }

  get ready(): boolean {
    return this.lrImage !== null && this.slots.length > 0 &&
      this.slots.every((s) => s !== null);
  }

  /**
   * Submit the current slots. Resolves with the new history entry, or null
   * when the run was superseded or aborted.
   */
  async run(seed = 0): Promise<HistoryEntry | null> {
    if (!this.ready) {
      throw new Error("fill the input image and every exemplar slot first");
    }
    const token = ++this.runToken;
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    this.phase = "running";
    this.error = null;
    const refs = this.slots.slice() as string[];
    this.emit();

    let response: EditResponse;
    try {
      response = await this.api.superresolve(
        {
          lr_image: this.lrImage as string,
          exemplar_refs: refs,
          return_heatmaps: this.showHeatmaps,
          seed,
        },
        controller.signal,
      );
    } catch (err) {
      if (token !== this.runToken) return null; // superseded; ignore
      this.phase = "error";
      this.error = err instanceof Error ? err.message : String(err);
      this.emit();
      return null;
    }

    if (token !== this.runToken) return null; // stale response; drop it

    const entry: HistoryEntry = {
      id: this.nextEntryId++,
      exemplarRefs: refs,
      response,
      timestamp: Date.now(),
    };
    this.history = [...this.history, entry]; // append-only
    this.phase = "idle";
    this.inflight = null;
    this.emit();
    return entry;
  }

  cancel(): void {
    this.runToken++;
    this.inflight?.abort();
    this.inflight = null;
    this.phase = "idle";
    this.emit();
  }

  setComparePair(a: number, b: number): void {
    const ids = new Set(this.history.map((h) => h.id));
    if (!ids.has(a) || !ids.has(b)) {
      throw new RangeError("compare targets must be history entries");
    }
    this.comparePair = [a, b];
    this.emit();
  }

  entry(id: number): HistoryEntry | undefined {
    return this.history.find((h) => h.id === id);
  }

  clearSession(): void {
    this.cancel();
    this.history = [];
    this.comparePair = null;
    this.error = null;
    this.emit();
  }
}

/** Data URLs for the overlay strip of a history entry, one per exemplar. */
export function heatmapStrip(
  entry: HistoryEntry,
  scale: "scale_lr" | "scale_2x" = "scale_lr",
): string[] {
  const maps = entry.response.heatmaps;
  if (!maps) return [];
  return maps[scale].map((b64) => `data:image/png;base64,${b64}`);
}
