/**
 * Annotation form state and rendering for both study phases.
 *
 * `AnnotationForm` owns an `AnnotationFormState` and is the only writer.
 * The render functions rebuild their container from the state on every
 * change — forms are three radio groups, so diffing buys nothing.
 */

import type {
  AnnotationFormState,
  LabelMap,
  Suggestion,
  TaskName,
} from "./types.js";
import { TASK_CLASSES } from "./types.js";

export class AnnotationForm {
  private state: AnnotationFormState;
  private readonly tasks: readonly TaskName[];

  constructor(tasks: readonly TaskName[]) {
    this.tasks = tasks;
    this.state = { phase: "initial", selections: {}, dirty: false };
  }

  /** Rebuild a form already past phase 1 (resume after a dropped session). */
  static resumeReview(tasks: readonly TaskName[], initialAnswers: LabelMap, suggestion: LabelMap): AnnotationForm {
    const form = new AnnotationForm(tasks);
    form.beginReview(initialAnswers, suggestion);
    return form;
  }

  getState(): Readonly<AnnotationFormState> {
    return this.state;
  }

  /** Record the reader's choice for one task (either phase). */
  select(task: TaskName, className: string): void {
    if (!TASK_CLASSES[task].includes(className)) {
      throw new Error(`"${className}" is not a ${task} class`);
    }
    this.state.selections[task] = className;
    this.refreshDirty();
  }

  /** True once every task has a selection; gates the submit button. */
  isComplete(): boolean {
    return this.tasks.every((task) => this.state.selections[task] !== undefined);
  }

  /** The submission body; only callable on a complete form. */
  payload(): LabelMap {
    if (!this.isComplete()) {
      throw new Error("form is incomplete");
    }
    const labels = {} as LabelMap;
    for (const task of this.tasks) {
      labels[task] = this.state.selections[task]!;
    }
    return labels;
  }

  /**
   * Enter the review phase: the acknowledged phase-1 answers become both
   * the editable selections and the immutable "yours" column, and the AI
   * suggestion enters client state for the first time.
   */
  beginReview(initialAnswers: LabelMap, suggestion: LabelMap): void {
    this.state = {
      phase: "review",
      selections: { ...initialAnswers },
      initialAnswers: { ...initialAnswers },
      aiSuggestion: { ...suggestion },
      dirty: false,
    };
  }

  /** Review: set one task back to the reader's own phase-1 answer. */
  keepMine(task: TaskName): void {
    if (this.state.phase !== "review") {
      throw new Error("keepMine is a review-phase action");
    }
    this.state.selections[task] = this.state.initialAnswers[task];
    this.refreshDirty();
  }

  /** Review: take the AI's class for one task. */
  adoptAi(task: TaskName): void {
    if (this.state.phase !== "review") {
      throw new Error("adoptAi is a review-phase action");
    }
    this.state.selections[task] = this.state.aiSuggestion[task];
    this.refreshDirty();
  }

  /** Review: take the AI's class for every task. */
  adoptAiAll(): void {
    for (const task of this.tasks) {
      this.adoptAi(task);
    }
  }

  private refreshDirty(): void {
    if (this.state.phase === "initial") {
      this.state.dirty = Object.keys(this.state.selections).length > 0;
    } else {
      const initial = this.state.initialAnswers;
      this.state.dirty = this.tasks.some((task) => this.state.selections[task] !== initial[task]);
    }
  }
}

/** The context block shown beside the image. Carries no AI fields. */
export function renderMetadataPanel(
  container: HTMLElement,
  meta: { marker_gene: string; expected_localization: string; tissue_type: string; cell_type: string },
): void {
  container.replaceChildren();
  const list = document.createElement("dl");
  list.className = "metadata-panel";
  const rows: Array<[string, string]> = [
    ["Marker gene", meta.marker_gene],
    ["Expected localization", meta.expected_localization],
    ["Tissue", meta.tissue_type],
    ["Cell type", meta.cell_type],
  ];
  for (const [term, value] of rows) {
    const dt = document.createElement("dt");
    dt.textContent = term;
    const dd = document.createElement("dd");
    dd.textContent = value;
    list.append(dt, dd);
  }
  container.appendChild(list);
}

/**
 * Phase-1 form: one radio group per task, submit gated on completeness.
 * Digit keys 1–4 fill the first task still lacking a selection, so a
 * practiced reader can score an image with three keystrokes.
 */
export function renderInitialForm(
  container: HTMLElement,
  form: AnnotationForm,
  tasks: readonly TaskName[],
  onSubmit: (labels: LabelMap) => void,
): void {
  const rerender = () => renderInitialForm(container, form, tasks, onSubmit);
  container.replaceChildren();
  const root = document.createElement("form");
  root.className = "annotation-form phase-initial";
  root.addEventListener("submit", (event) => event.preventDefault());

  for (const task of tasks) {
    root.appendChild(taskSelector(task, form, rerender));
  }

  const submit = document.createElement("button");
  submit.type = "button";
  submit.className = "submit-initial";
  submit.textContent = "Submit annotation";
  submit.disabled = !form.isComplete();
  submit.addEventListener("click", () => onSubmit(form.payload()));
  root.appendChild(submit);

  root.tabIndex = -1;
  root.addEventListener("keydown", (event) => {
    const slot = Number(event.key);
    if (!(slot >= 1 && slot <= 4)) {
      return;
    }
    const pending = tasks.find((task) => form.getState().selections[task] === undefined);
    if (pending !== undefined && slot <= TASK_CLASSES[pending].length) {
      form.select(pending, TASK_CLASSES[pending][slot - 1]);
      rerender();
    }
  });

  container.appendChild(root);
}

/**
 * Phase-2 form: per task, the reader's phase-1 answer and the AI's
 * recommendation side by side, with "keep mine" / "adopt AI" buttons and
 * the radio group for picking any third class.
 */
export function renderReviewForm(
  container: HTMLElement,
  form: AnnotationForm,
  tasks: readonly TaskName[],
  suggestion: Suggestion,
  showConfidence: boolean,
  onSubmit: (labels: LabelMap) => void,
): void {
  const state = form.getState();
  if (state.phase !== "review") {
    throw new Error("renderReviewForm needs a review-phase form");
  }
  const rerender = () => renderReviewForm(container, form, tasks, suggestion, showConfidence, onSubmit);
  container.replaceChildren();
  const root = document.createElement("form");
  root.className = "annotation-form phase-review";
  root.addEventListener("submit", (event) => event.preventDefault());

  const adoptAll = document.createElement("button");
  adoptAll.type = "button";
  adoptAll.className = "adopt-ai-all";
  adoptAll.textContent = "Adopt AI for all tasks";
  adoptAll.addEventListener("click", () => {
    form.adoptAiAll();
    rerender();
  });
  root.appendChild(adoptAll);

  for (const task of tasks) {
    const row = document.createElement("div");
    row.className = `review-row review-${cssToken(task)}`;

    const yours = document.createElement("span");
    yours.className = "answer-yours";
    yours.textContent = `Your answer: ${state.initialAnswers[task]}`;
    row.appendChild(yours);

    const ai = document.createElement("span");
    ai.className = "answer-ai";
    ai.textContent = `AI: ${state.aiSuggestion[task]}`;
    const confidence = suggestion.confidence?.[task];
    if (showConfidence && confidence !== undefined) {
      ai.textContent += ` (${Math.round(confidence * 100)}%)`;
    }
    row.appendChild(ai);

    const keep = document.createElement("button");
    keep.type = "button";
    keep.className = "keep-mine";
    keep.textContent = "Keep mine";
    keep.addEventListener("click", () => {
      form.keepMine(task);
      rerender();
    });
    row.appendChild(keep);

    const adopt = document.createElement("button");
    adopt.type = "button";
    adopt.className = "adopt-ai";
    adopt.textContent = "Adopt AI";
    adopt.addEventListener("click", () => {
      form.adoptAi(task);
      rerender();
    });
    row.appendChild(adopt);

    row.appendChild(taskSelector(task, form, rerender));
    root.appendChild(row);
  }

  const submit = document.createElement("button");
  submit.type = "button";
  submit.className = "submit-review";
  submit.textContent = "Submit final annotation";
  submit.disabled = !form.isComplete();
  submit.addEventListener("click", () => onSubmit(form.payload()));
  root.appendChild(submit);

  container.appendChild(root);
}

function taskSelector(task: TaskName, form: AnnotationForm, onChange: () => void): HTMLFieldSetElement {
  const group = document.createElement("fieldset");
  group.className = `task-group task-${cssToken(task)}`;
  const legend = document.createElement("legend");
  legend.textContent = task;
  group.appendChild(legend);

  TASK_CLASSES[task].forEach((className, index) => {
    const label = document.createElement("label");
    const radio = document.createElement("input");
    radio.type = "radio";
    radio.name = `select-${task}`;
    radio.value = className;
    radio.checked = form.getState().selections[task] === className;
    radio.addEventListener("change", () => {
      form.select(task, className);
      onChange();
    });
    label.appendChild(radio);
    label.append(` ${index + 1}. ${className}`);
    group.appendChild(label);
  });
  return group;
}

function cssToken(task: string): string {
  return task.replace(/[^a-z0-9]+/gi, "-");
}
