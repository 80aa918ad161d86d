/**
 * Pan/zoom image viewer.
 *
 * CSS-transform based: the image element is translated then scaled inside a
 * clipping frame. Wheel zoom keeps the pixel under the cursor fixed; drag
 * pans; +/- buttons and double-click zoom around the frame centre.
 */

export interface ViewerTransform {
  scale: number;
  x: number;
  y: number;
}

const MIN_SCALE = 0.25;
const MAX_SCALE = 16;
const BUTTON_ZOOM_STEP = 1.25;
const WHEEL_ZOOM_FACTOR = 0.0015;

export class PanZoomViewer {
  readonly frame: HTMLDivElement;
  private readonly image: HTMLImageElement;
  private transform: ViewerTransform = { scale: 1, x: 0, y: 0 };
  private dragging = false;
  private lastPointer = { x: 0, y: 0 };

  constructor(container: HTMLElement) {
    this.frame = document.createElement("div");
    this.frame.className = "viewer-frame";
    this.image = document.createElement("img");
    this.image.className = "viewer-image";
    this.image.draggable = false;
    this.image.alt = "tissue image under annotation";
    this.frame.appendChild(this.image);

    const controls = document.createElement("div");
    controls.className = "viewer-controls";
    controls.appendChild(this.makeButton("+", "zoom in", () => this.zoomBy(BUTTON_ZOOM_STEP)));
    controls.appendChild(this.makeButton("−", "zoom out", () => this.zoomBy(1 / BUTTON_ZOOM_STEP)));
    controls.appendChild(this.makeButton("⟲", "reset view", () => this.reset()));
    this.frame.appendChild(controls);

    this.frame.addEventListener("wheel", this.onWheel);
    this.frame.addEventListener("mousedown", this.onMouseDown);
    this.frame.addEventListener("dblclick", () => this.zoomBy(BUTTON_ZOOM_STEP));
    document.addEventListener("mousemove", this.onMouseMove);
    document.addEventListener("mouseup", this.onMouseUp);

    container.appendChild(this.frame);
    this.apply();
  }

  /** Swap the displayed image and reset the view. */
  setImage(url: string): void {
    this.image.src = url;
    this.reset();
  }

  /** Current transform, for tests and for persisting view state. */
  getTransform(): ViewerTransform {
    return { ...this.transform };
  }

  reset(): void {
    this.transform = { scale: 1, x: 0, y: 0 };
    this.apply();
  }

  /** Zoom by `factor` about `origin` (frame coordinates; default centre). */
  zoomBy(factor: number, origin?: { x: number; y: number }): void {
    const rect = this.frame.getBoundingClientRect();
    const about = origin ?? { x: rect.width / 2, y: rect.height / 2 };
    const next = clamp(this.transform.scale * factor, MIN_SCALE, MAX_SCALE);
    const ratio = next / this.transform.scale;
    // Keep the point under `about` stationary: o - s1/s0 * (o - t0).
    this.transform = {
      scale: next,
      x: about.x - ratio * (about.x - this.transform.x),
      y: about.y - ratio * (about.y - this.transform.y),
    };
    this.apply();
  }

  destroy(): void {
    document.removeEventListener("mousemove", this.onMouseMove);
    document.removeEventListener("mouseup", this.onMouseUp);
    this.frame.remove();
  }

  private onWheel = (event: WheelEvent) => {
    event.preventDefault();
    const rect = this.frame.getBoundingClientRect();
    const origin = { x: event.clientX - rect.left, y: event.clientY - rect.top };
    this.zoomBy(Math.exp(-event.deltaY * WHEEL_ZOOM_FACTOR), origin);
  };

  private onMouseDown = (event: MouseEvent) => {
    if (event.button !== 0) {
      return;
    }
    event.preventDefault();
    this.dragging = true;
    this.lastPointer = { x: event.clientX, y: event.clientY };
  };

  private onMouseMove = (event: MouseEvent) => {
    if (!this.dragging) {
      return;
    }
    this.transform.x += event.clientX - this.lastPointer.x;
    this.transform.y += event.clientY - this.lastPointer.y;
    this.lastPointer = { x: event.clientX, y: event.clientY };
    this.apply();
  };

  private onMouseUp = () => {
    this.dragging = false;
  };

  private apply(): void {
    const { scale, x, y } = this.transform;
    this.image.style.transformOrigin = "0 0";
    this.image.style.transform = `translate(${x}px, ${y}px) scale(${scale})`;
  }

  private makeButton(text: string, label: string, onClick: () => void): HTMLButtonElement {
    const button = document.createElement("button");
    button.type = "button";
    button.textContent = text;
    button.setAttribute("aria-label", label);
    button.addEventListener("click", onClick);
    return button;
  }
}

function clamp(value: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, value));
}
