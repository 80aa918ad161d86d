/**
 * Domain types for the two-phase reader-study annotation interface.
 *
 * Every shape here mirrors a JSON payload of the study service's HTTP API;
 * the client never sees study data through any other channel. Label values
 * travel as class-name strings (never indices) in both directions.
 */

/** The three staining tasks a reader scores per image. */
export type TaskName = "location" | "intensity" | "quantity";

export const TASK_NAMES: readonly TaskName[] = ["location", "intensity", "quantity"];

/**
 * The exact class vocabulary per task. The service validates submissions
 * against the same strings, so these must match character-for-character.
 */
export const TASK_CLASSES: Record<TaskName, readonly string[]> = {
  location: ["none", "cytoplasmic/membranous", "nuclear", "cytoplasmic/membranous & nuclear"],
  intensity: ["negative", "weak", "moderate", "strong"],
  quantity: ["none", "<25%", "25%-75%", ">75%"],
};

/** One selected class name per task; a submission requires all tasks present. */
export type LabelMap = Record<TaskName, string>;

/** Completed/total assignment counts as the service reports them. */
export interface Progress {
  completed: number;
  total: number;
}

/** Response of POST /sessions. */
export interface SessionInfo {
  token: string;
  study_id: string;
  rater_id: string;
  tasks: TaskName[];
  progress: Progress;
}

/**
 * Response of GET /sessions/{token}/next — the image under annotation plus
 * the metadata panel contents. Deliberately never carries the AI suggestion
 * or ground truth; those have their own, phase-gated endpoints.
 */
export interface Assignment {
  assignment_id: string;
  md5: string;
  image_url: string;
  marker_gene: string;
  expected_localization: string;
  tissue_type: string;
  cell_type: string;
  tasks: TaskName[];
  progress: Progress;
}

/** Acknowledgment returned by both submission endpoints. */
export interface SubmissionAck {
  status: "recorded";
  phase: "initial" | "final";
  progress: Progress;
}

/**
 * Response of GET /assignments/{id}/suggestion (only after phase 1 is
 * acknowledged). `confidence` is not part of the study protocol today but
 * is typed so a service that sends it can feed the opt-in confidence row.
 */
export interface Suggestion {
  labels: LabelMap;
  confidence?: Partial<Record<TaskName, number>>;
}

/** Response of GET /assignments/{id} — the resume view. */
export interface AssignmentState extends Assignment {
  phase1: LabelMap | null;
  phase2: LabelMap | null;
  suggestion?: LabelMap;
}

/** Error body every non-2xx service response carries. */
export interface ServiceErrorPayload {
  error: string;
  detail: string;
}

/**
 * Client-side state of the annotation form.
 *
 * A discriminated union rather than one struct with an optional field:
 * while `phase` is "initial" the AI suggestion is absent from the state
 * object itself, so no rendering or logging path can reach it early.
 */
export type AnnotationFormState = InitialAnnotationState | ReviewAnnotationState;

/** Phase 1: the reader annotates unassisted. */
export interface InitialAnnotationState {
  phase: "initial";
  /** Class name per task, filled in as the reader selects. */
  selections: Partial<Record<TaskName, string>>;
  /** True once the reader has changed anything since the phase began. */
  dirty: boolean;
}

/** Phase 2: the reader reviews their answers beside the AI's. */
export interface ReviewAnnotationState {
  phase: "review";
  /** Starts as a copy of the phase-1 answers; edits land here. */
  selections: Partial<Record<TaskName, string>>;
  /** The reader's recorded phase-1 answers, immutable in this phase. */
  initialAnswers: LabelMap;
  /** The AI recommendation shown side-by-side. */
  aiSuggestion: LabelMap;
  dirty: boolean;
}

/** Runtime options of the annotation app. */
export interface StudyUiOptions {
  /** Service origin, e.g. "http://127.0.0.1:8731". Empty = same origin. */
  baseUrl: string;
  raterId: string;
  /**
   * Show AI confidence next to the suggested class when the service
   * provides one. Off by default: the two-phase protocol shows the
   * recommendation itself, not the model's certainty.
   */
  showConfidence?: boolean;
}
