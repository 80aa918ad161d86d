/**
 * Two-phase annotation app.
 *
 * Owns the session loop: next assignment -> unassisted annotation ->
 * suggestion review -> final submission -> next. All state of record lives
 * on the service; this class holds only the current assignment, the form,
 * and the rendered DOM. Optimistic progress updates are reconciled against
 * every acknowledgment and rolled back on rejection.
 */

import { ServiceError, StudyClient } from "./client.js";
import { AnnotationForm, renderInitialForm, renderMetadataPanel, renderReviewForm } from "./forms.js";
import type {
  Assignment,
  LabelMap,
  Progress,
  StudyUiOptions,
  Suggestion,
  TaskName,
} from "./types.js";
import { PanZoomViewer } from "./viewer.js";

/** Errors the protocol itself defines; everything else gets a retry view. */
const DIALOG_ERRORS = new Set(["PhaseOrderViolation", "DuplicateSubmission"]);

export class StudyApp {
  readonly element: HTMLDivElement;
  readonly client: StudyClient;

  private readonly options: StudyUiOptions;
  private readonly viewerSlot: HTMLDivElement;
  private readonly metadataSlot: HTMLDivElement;
  private readonly formSlot: HTMLDivElement;
  private readonly progressLabel: HTMLSpanElement;
  private viewer: PanZoomViewer | null = null;

  private token = "";
  private tasks: readonly TaskName[] = [];
  private assignment: Assignment | null = null;
  private form: AnnotationForm | null = null;
  private suggestion: Suggestion | null = null;
  private progress: Progress = { completed: 0, total: 0 };

  private inflight: Promise<void> = Promise.resolve();

  constructor(container: HTMLElement, options: StudyUiOptions, client?: StudyClient) {
    this.options = options;
    this.client = client ?? new StudyClient(options.baseUrl);

    this.element = document.createElement("div");
    this.element.className = "study-app";

    const header = document.createElement("header");
    const title = document.createElement("span");
    title.className = "study-title";
    title.textContent = "Staining annotation";
    this.progressLabel = document.createElement("span");
    this.progressLabel.className = "progress";
    header.append(title, this.progressLabel);
    this.element.appendChild(header);

    const main = document.createElement("main");
    this.viewerSlot = document.createElement("div");
    this.viewerSlot.className = "viewer-slot";
    const aside = document.createElement("aside");
    this.metadataSlot = document.createElement("div");
    this.metadataSlot.className = "metadata-slot";
    this.formSlot = document.createElement("div");
    this.formSlot.className = "form-slot";
    aside.append(this.metadataSlot, this.formSlot);
    main.append(this.viewerSlot, aside);
    this.element.appendChild(main);

    container.appendChild(this.element);
  }

  /** Open the session and show the first assignment. */
  start(): void {
    this.run(async () => {
      const session = await this.client.openSession(this.options.raterId);
      this.token = session.token;
      this.tasks = session.tasks;
      this.setProgress(session.progress);
      await this.loadNext();
    });
  }

  /** Resolves once no user-triggered operation is in flight. */
  async whenIdle(): Promise<void> {
    let previous;
    do {
      previous = this.inflight;
      await previous;
    } while (previous !== this.inflight);
  }

  /** The current form state (tests inspect the union shape). */
  getFormState() {
    return this.form?.getState() ?? null;
  }

  getProgress(): Progress {
    return { ...this.progress };
  }

  private run(op: () => Promise<void>): void {
    this.inflight = this.inflight
      .then(op)
      .catch((error) => this.handleError(error, op));
  }

  // -- session loop --------------------------------------------------------

  private async loadNext(): Promise<void> {
    let assignment: Assignment;
    try {
      assignment = await this.client.nextAssignment(this.token);
    } catch (error) {
      if (error instanceof ServiceError && error.name === "StudyComplete") {
        this.renderComplete();
        return;
      }
      throw error;
    }
    this.assignment = assignment;
    this.setProgress(assignment.progress);
    this.renderAssignment(assignment);

    // Resume view: if phase 1 is already on record (e.g. the tab died
    // mid-review), rebuild the review form from the service's state
    // instead of asking the reader to annotate again.
    const state = await this.client.assignmentState(assignment.assignment_id);
    if (state.phase1 !== null && state.phase2 === null && state.suggestion !== undefined) {
      this.suggestion = { labels: state.suggestion };
      this.form = AnnotationForm.resumeReview(this.tasks, state.phase1, state.suggestion);
      this.renderReview();
    } else {
      this.suggestion = null;
      this.form = new AnnotationForm(this.tasks);
      this.renderInitial();
    }
  }

  private async submitInitial(labels: LabelMap): Promise<void> {
    const assignment = this.assignment!;
    const ack = await this.client.submitPhase1(assignment.assignment_id, labels);
    this.setProgress(ack.progress);
    // Only now — after the acknowledgment — may the suggestion be fetched.
    const suggestion = await this.client.getSuggestion(assignment.assignment_id);
    this.suggestion = suggestion;
    this.form!.beginReview(labels, suggestion.labels);
    this.renderReview();
  }

  private async submitFinal(labels: LabelMap): Promise<void> {
    const assignment = this.assignment!;
    // Optimistic: count the assignment done right away, reconcile below.
    const before = this.progress;
    this.setProgress({ ...before, completed: before.completed + 1 });
    let ack;
    try {
      ack = await this.client.submitPhase2(assignment.assignment_id, labels);
    } catch (error) {
      this.setProgress(before);
      throw error;
    }
    this.setProgress(ack.progress);
    await this.loadNext();
  }

  /** Re-fetch the current assignment and re-enter the right phase. */
  private async resync(): Promise<void> {
    if (this.assignment === null) {
      await this.loadNext();
      return;
    }
    const state = await this.client.assignmentState(this.assignment.assignment_id);
    if (state.phase2 !== null) {
      await this.loadNext();
    } else if (state.phase1 !== null && state.suggestion !== undefined) {
      this.suggestion = { labels: state.suggestion };
      this.form = AnnotationForm.resumeReview(this.tasks, state.phase1, state.suggestion);
      this.renderReview();
    } else {
      this.form = new AnnotationForm(this.tasks);
      this.renderInitial();
    }
  }

  // -- error surfaces -------------------------------------------------------

  private handleError(error: unknown, failedOp: () => Promise<void>): void {
    if (error instanceof ServiceError && DIALOG_ERRORS.has(error.name)) {
      this.renderDialog(error);
    } else {
      this.renderRetry(error, failedOp);
    }
  }

  private renderDialog(error: ServiceError): void {
    const overlay = document.createElement("div");
    overlay.className = "blocking-dialog";
    const box = document.createElement("div");
    box.className = "dialog-box";
    const message = document.createElement("p");
    message.textContent = `${error.name}: ${error.detail}`;
    const proceed = document.createElement("button");
    proceed.type = "button";
    proceed.className = "dialog-continue";
    proceed.textContent = "Continue";
    proceed.addEventListener("click", () => {
      overlay.remove();
      this.run(() => this.resync());
    });
    box.append(message, proceed);
    overlay.appendChild(box);
    this.element.appendChild(overlay);
  }

  private renderRetry(error: unknown, failedOp: () => Promise<void>): void {
    this.formSlot.replaceChildren();
    const view = document.createElement("div");
    view.className = "retry-view";
    const message = document.createElement("p");
    message.textContent = `The service is unreachable or rejected the request (${describe(error)}).`;
    const retry = document.createElement("button");
    retry.type = "button";
    retry.className = "retry-button";
    retry.textContent = "Retry";
    retry.addEventListener("click", () => {
      this.run(failedOp);
    });
    view.append(message, retry);
    this.formSlot.appendChild(view);
  }

  // -- rendering ------------------------------------------------------------

  private renderAssignment(assignment: Assignment): void {
    if (this.viewer === null) {
      this.viewer = new PanZoomViewer(this.viewerSlot);
    }
    this.viewer.setImage(this.client.imageUrl(assignment.image_url));
    renderMetadataPanel(this.metadataSlot, assignment);
  }

  private renderInitial(): void {
    renderInitialForm(this.formSlot, this.form!, this.tasks, (labels) => {
      this.run(() => this.submitInitial(labels));
    });
  }

  private renderReview(): void {
    renderReviewForm(
      this.formSlot,
      this.form!,
      this.tasks,
      this.suggestion!,
      this.options.showConfidence ?? false,
      (labels) => {
        this.run(() => this.submitFinal(labels));
      },
    );
  }

  private renderComplete(): void {
    this.assignment = null;
    this.form = null;
    this.viewer?.destroy();
    this.viewer = null;
    this.viewerSlot.replaceChildren();
    this.metadataSlot.replaceChildren();
    this.formSlot.replaceChildren();
    const done = document.createElement("div");
    done.className = "study-complete";
    done.textContent = `Study complete — ${this.progress.completed} of ${this.progress.total} images annotated. Thank you.`;
    this.formSlot.appendChild(done);
  }

  private setProgress(progress: Progress): void {
    this.progress = { ...progress };
    this.progressLabel.textContent = `${progress.completed} / ${progress.total}`;
  }
}

function describe(error: unknown): string {
  if (error instanceof ServiceError) {
    return `${error.status} ${error.name}`;
  }
  return error instanceof Error ? error.message : String(error);
}
