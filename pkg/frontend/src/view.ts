/** Projection of a server snapshot into display items.
 *
 * Thin-client rule: every rendered number is a field of the last server
 * snapshot, never a client-side computation. Each item therefore carries
 * the JSON path it came from, and the integration tests assert that
 * resolving the path in the raw payload reproduces the displayed value.
 */

import type { TrialSnapshot } from "./types";

export interface DisplayItem {
  label: string;
  value: number | string;
  source: string; // JSON path into the snapshot, e.g. "derived.statistic.value"
}

export interface BlockRow {
  cells: DisplayItem[];
}

export interface TrialView {
  banner: { status: string; tone: "active" | "success" | "stopped" | "neutral" };
  headline: DisplayItem[];
  statistic: DisplayItem[];
  blocks: BlockRow[];
  trajectory: { points: number[]; source: string; terminal: boolean };
}

export function resolvePath(snapshot: unknown, path: string): unknown {
  let node: unknown = snapshot;
  for (const part of path.split(".")) {
    if (node === null || typeof node !== "object") return undefined;
    const key: string | number = /^\d+$/.test(part) ? Number(part) : part;
    node = (node as Record<string | number, unknown>)[key];
  }
  return node;
}

const STATUS_LABELS: Record<string, { status: string; tone: TrialView["banner"]["tone"] }> = {
  enrolling: { status: "Enrolling", tone: "active" },
  stopped_efficacy: { status: "Stopped early: efficacy", tone: "success" },
  stopped_futility: { status: "Stopped early: futility", tone: "stopped" },
  completed: { status: "Completed", tone: "neutral" },
};

export function toTrialView(snapshot: TrialSnapshot): TrialView {
  const banner = STATUS_LABELS[snapshot.status] ?? {
    status: snapshot.status,
    tone: "neutral" as const,
  };
  const headline: DisplayItem[] = [
    { label: "Trial", value: snapshot.trial_id, source: "trial_id" },
    { label: "Status", value: snapshot.status, source: "status" },
  ];
  if (snapshot.next_block_index !== null) {
    headline.push({
      label: "Next block",
      value: snapshot.next_block_index,
      source: "next_block_index",
    });
  }
  if (snapshot.current_pi_a !== null) {
    headline.push({
      label: "Issued allocation to A",
      value: snapshot.current_pi_a,
      source: "current_pi_a",
    });
  }
  if (snapshot.decision !== null) {
    headline.push({ label: "Decision", value: snapshot.decision, source: "decision" });
  }
  if (snapshot.delta_hat !== null) {
    headline.push({
      label: "Estimated risk difference",
      value: snapshot.delta_hat,
      source: "delta_hat",
    });
  }

  const statistic: DisplayItem[] = [];
  const stat = snapshot.derived.statistic;
  if (snapshot.derived.cum_p_a !== null) {
    statistic.push({
      label: "Cumulative success rate A",
      value: snapshot.derived.cum_p_a,
      source: "derived.cum_p_a",
    });
  }
  if (snapshot.derived.cum_p_b !== null) {
    statistic.push({
      label: "Cumulative success rate B",
      value: snapshot.derived.cum_p_b,
      source: "derived.cum_p_b",
    });
  }
  if (stat?.type === "z") {
    statistic.push({ label: "Current z", value: stat.value, source: "derived.statistic.value" });
    if (stat.efficacy_z !== undefined) {
      statistic.push(
        { label: "Efficacy boundary", value: stat.efficacy_z, source: "derived.statistic.efficacy_z" },
        { label: "Futility boundary", value: stat.futility_z as number, source: "derived.statistic.futility_z" },
        { label: "Distance to efficacy stop", value: stat.efficacy_distance as number, source: "derived.statistic.efficacy_distance" },
        { label: "Distance to futility stop", value: stat.futility_distance as number, source: "derived.statistic.futility_distance" },
      );
    }
  } else if (stat?.type === "posterior_b_gt_a") {
    statistic.push(
      { label: "Posterior P(B > A)", value: stat.value, source: "derived.statistic.value" },
      { label: "Early success above", value: stat.success_threshold, source: "derived.statistic.success_threshold" },
      { label: "Early futility below", value: stat.futility_threshold, source: "derived.statistic.futility_threshold" },
      { label: "Final superiority above", value: stat.final_threshold, source: "derived.statistic.final_threshold" },
    );
  }

  const blocks: BlockRow[] = snapshot.blocks.map((block, i) => ({
    cells: [
      { label: "block", value: block.index, source: `blocks.${i}.index` },
      { label: "pi_a", value: block.pi_a, source: `blocks.${i}.pi_a` },
      { label: "n_a", value: block.n_a, source: `blocks.${i}.n_a` },
      { label: "y_a", value: block.y_a, source: `blocks.${i}.y_a` },
      { label: "n_b", value: block.n_b, source: `blocks.${i}.n_b` },
      { label: "y_b", value: block.y_b, source: `blocks.${i}.y_b` },
    ],
  }));

  return {
    banner,
    headline,
    statistic,
    blocks,
    trajectory: {
      points: snapshot.derived.pi_history,
      source: "derived.pi_history",
      terminal: snapshot.status !== "enrolling",
    },
  };
}
