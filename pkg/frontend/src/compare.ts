/** Shared zoom/pan state for two synchronized comparison panes. */
export type ViewTransform = { scale: number; x: number; y: number };

const MIN_SCALE = 1;
const MAX_SCALE = 16;

export class SyncedView {
  private transform: ViewTransform = { scale: 1, x: 0, y: 0 };
  private listeners: ((t: ViewTransform) => void)[] = [];

  get(): ViewTransform {
    return { ...this.transform };
  }

  subscribe(fn: (t: ViewTransform) => void): () => void {
    this.listeners.push(fn);
    fn(this.get());
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private emit(): void {
    for (const fn of this.listeners) fn(this.get());
  }

  /** Zoom by `factor` keeping the content point under (cx, cy) fixed. */
  zoom(factor: number, cx: number, cy: number): void {
    const t = this.transform;
    const next = Math.min(MAX_SCALE, Math.max(MIN_SCALE, t.scale * factor));
    const applied = next / t.scale;
    this.transform = {
      scale: next,
      x: cx - (cx - t.x) * applied,
      y: cy - (cy - t.y) * applied,
    };
    if (this.transform.scale === 1) this.transform = { scale: 1, x: 0, y: 0 };
    this.emit();
  }

  pan(dx: number, dy: number): void {
    if (this.transform.scale === 1) return;
    this.transform = {
      ...this.transform,
      x: this.transform.x + dx,
      y: this.transform.y + dy,
    };
    this.emit();
  }

  reset(): void {
    this.transform = { scale: 1, x: 0, y: 0 };
    this.emit();
  }

  cssTransform(): string {
    const { scale, x, y } = this.transform;
    return `translate(${x}px, ${y}px) scale(${scale})`;
  }
}
