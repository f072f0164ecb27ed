export type LabelValue = 'Sponsored' | 'NonSponsored';
export type SetupValue = 'WithExplanations' | 'WithoutExplanations';

export interface ItemView {
  post_id: string;
  caption: string;
  explanation_block: string | null;
  position: number;
  total: number;
}

export type NextResponse =
  | { done: false; item: ItemView }
  | { done: true; survey_required: boolean };

export interface ProjectInfo {
  project_id: string;
  annotator_id: string;
  setup: SetupValue;
  batch_id: string;
  total: number;
  created_at: string;
}

export interface LabelAck {
  ok: boolean;
  progress: number;
}

export interface SurveyAnswers {
  q1_helpful: number;
  q2_accurate: number;
  q3_agree_freq: number;
  q4_confidence: boolean;
  q5_aspects: string[];
  q5_other_text: string;
  q6_understanding: string;
  q7_improvements: string;
}

export interface AgreementRow {
  group_id: string;
  n_annotators: number;
  alpha_pct: number | null;
  absolute_pct: number | null;
  one_disag_pct: number | null;
  disclosed_acc_pct: number | null;
  sponsored_pct: number;
}

export interface PairwiseSummary {
  min_abs: number;
  max_abs: number;
  std_abs: number;
  min_alpha: number;
  max_alpha: number;
  std_alpha: number;
}

export interface BiasRow {
  sponsored_pct: number;
  model_majority_agreement_pct: number;
  tie_items_excluded: number;
}

export interface GroupReport {
  agreement: AgreementRow;
  pairwise: { pairs: unknown[]; skipped: unknown[]; summary: PairwiseSummary } | null;
  bias: BiasRow | null;
}

export interface RelativeDiffRow {
  base: string;
  new: string;
  diffs: Record<string, number | null>;
}

export interface ReportBundle {
  groups: Record<string, GroupReport>;
  relative_diffs: RelativeDiffRow[];
}
