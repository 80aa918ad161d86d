/**
 * Unit tests for the pan/zoom viewer's transform arithmetic and event wiring.
 */

import { afterEach, beforeEach, describe, expect, it } from "vitest";
import { PanZoomViewer } from "../src/viewer.js";

let container: HTMLElement;
let viewer: PanZoomViewer;

beforeEach(() => {
  document.body.replaceChildren();
  container = document.createElement("div");
  document.body.appendChild(container);
  viewer = new PanZoomViewer(container);
});

afterEach(() => {
  viewer.destroy();
});

function image(): HTMLImageElement {
  return container.querySelector<HTMLImageElement>(".viewer-image")!;
}

describe("zooming", () => {
  it("scales about an explicit origin, keeping that point fixed", () => {
    viewer.zoomBy(2, { x: 100, y: 50 });
    // Screen position of image point p is t + s*p. With t0 = 0, s0 = 1 the
    // point under the origin is p = (100, 50); after the zoom it must still
    // sit at (100, 50).
    const { scale, x, y } = viewer.getTransform();
    expect(scale).toBe(2);
    expect(x + scale * 100).toBeCloseTo(100);
    expect(y + scale * 50).toBeCloseTo(50);
    expect(x).toBeCloseTo(-100);
    expect(y).toBeCloseTo(-50);
  });

  it("clamps the scale to its bounds", () => {
    viewer.zoomBy(1e9);
    expect(viewer.getTransform().scale).toBe(16);
    viewer.zoomBy(1e-9);
    expect(viewer.getTransform().scale).toBe(0.25);
  });

  it("zooms in on wheel-up about the cursor and prevents page scroll", () => {
    const event = new WheelEvent("wheel", { deltaY: -200, clientX: 40, clientY: 30, cancelable: true, bubbles: true });
    viewer.frame.dispatchEvent(event);
    expect(event.defaultPrevented).toBe(true);
    const { scale } = viewer.getTransform();
    expect(scale).toBeGreaterThan(1);
    expect(scale).toBeCloseTo(Math.exp(200 * 0.0015));
  });

  it("zooms out on wheel-down", () => {
    viewer.frame.dispatchEvent(new WheelEvent("wheel", { deltaY: 300, cancelable: true }));
    expect(viewer.getTransform().scale).toBeLessThan(1);
  });

  it("steps in from the buttons and writes the CSS transform", () => {
    container.querySelector<HTMLButtonElement>('[aria-label="zoom in"]')!.click();
    expect(viewer.getTransform().scale).toBeCloseTo(1.25);
    container.querySelector<HTMLButtonElement>('[aria-label="zoom out"]')!.click();
    expect(viewer.getTransform().scale).toBeCloseTo(1);
    expect(image().style.transform).toMatch(/^translate\(.*\) scale\(1\)$/);
  });
});

describe("panning", () => {
  it("drags with the left button via document-level move events", () => {
    viewer.frame.dispatchEvent(new MouseEvent("mousedown", { button: 0, clientX: 10, clientY: 10, bubbles: true }));
    document.dispatchEvent(new MouseEvent("mousemove", { clientX: 35, clientY: 4 }));
    expect(viewer.getTransform()).toMatchObject({ x: 25, y: -6 });
    document.dispatchEvent(new MouseEvent("mouseup"));
    document.dispatchEvent(new MouseEvent("mousemove", { clientX: 100, clientY: 100 }));
    expect(viewer.getTransform()).toMatchObject({ x: 25, y: -6 }); // released
  });

  it("ignores non-left buttons", () => {
    viewer.frame.dispatchEvent(new MouseEvent("mousedown", { button: 2, clientX: 10, clientY: 10, bubbles: true }));
    document.dispatchEvent(new MouseEvent("mousemove", { clientX: 50, clientY: 50 }));
    expect(viewer.getTransform()).toMatchObject({ x: 0, y: 0 });
  });

  it("stops listening after destroy", () => {
    viewer.frame.dispatchEvent(new MouseEvent("mousedown", { button: 0, clientX: 0, clientY: 0, bubbles: true }));
    viewer.destroy();
    document.dispatchEvent(new MouseEvent("mousemove", { clientX: 9, clientY: 9 }));
    expect(viewer.getTransform()).toMatchObject({ x: 0, y: 0 });
    expect(container.querySelector(".viewer-frame")).toBeNull();
  });
});

describe("view state", () => {
  it("resets on demand and when the image changes", () => {
    viewer.zoomBy(4, { x: 10, y: 10 });
    viewer.reset();
    expect(viewer.getTransform()).toEqual({ scale: 1, x: 0, y: 0 });

    viewer.zoomBy(4, { x: 10, y: 10 });
    viewer.setImage("/images/abc");
    expect(image().src).toContain("/images/abc");
    expect(viewer.getTransform()).toEqual({ scale: 1, x: 0, y: 0 });
  });

  it("marks the image non-draggable so native drag cannot fight the pan", () => {
    expect(image().draggable).toBe(false);
    expect(image().alt).not.toBe("");
  });
});
