/** Payload shapes returned by the conduct service. */

export interface BlockRecord {
  index: number;
  pi_a: number;
  n_a: number;
  n_b: number;
  y_a: number;
  y_b: number;
}

export interface ZStatistic {
  type: "z";
  value: number;
  efficacy_z?: number;
  futility_z?: number;
  efficacy_distance?: number;
  futility_distance?: number;
}

export interface PosteriorStatistic {
  type: "posterior_b_gt_a";
  value: number;
  success_threshold: number;
  futility_threshold: number;
  final_threshold: number;
}

export interface DerivedDisplay {
  block_size: number;
  num_blocks: number;
  pi_history: number[];
  cum_p_a: number | null;
  cum_p_b: number | null;
  statistic: ZStatistic | PosteriorStatistic | null;
}

export type TrialStatus =
  | "enrolling"
  | "stopped_efficacy"
  | "stopped_futility"
  | "completed";

export interface TrialSnapshot {
  trial_id: string;
  config: Record<string, unknown>;
  blocks: BlockRecord[];
  status: TrialStatus;
  next_block_index: number | null;
  current_pi_a: number | null;
  decision: string | null;
  delta_hat: number | null;
  flag: string | null;
  journal_offset: number;
  derived: DerivedDisplay;
}

export interface TrialListEntry {
  trial_id: string;
  status: TrialStatus;
  blocks_committed: number;
  next_block_index: number | null;
}

export interface ServiceErrorBody {
  error: string;
  detail: string;
}
