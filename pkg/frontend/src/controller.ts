/** Dashboard controller: owns the last server snapshot, refreshes it by
 * polling after each mutation, and gates block submission behind form
 * validation. Optimistic updates are deliberately absent: rendered state
 * is always the last server response. */

import { ApiClient } from "./api";
import { validateBlockEntry, type BlockEntry, type ValidationResult } from "./form";
import type { TrialSnapshot } from "./types";
import { toTrialView, type TrialView } from "./view";

export class DashboardController {
  private snapshot: TrialSnapshot | null = null;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private api: ApiClient,
    private onChange: (view: TrialView, snapshot: TrialSnapshot) => void,
    private pollMs = 5000,
  ) {}

  get current(): TrialSnapshot | null {
    return this.snapshot;
  }

  async createTrial(config: Record<string, unknown>, trialId?: string): Promise<void> {
    this.accept(await this.api.createTrial(config, trialId));
  }

  async loadTrial(trialId: string): Promise<void> {
    this.accept(await this.api.getTrial(trialId));
  }

  async refresh(): Promise<void> {
    if (this.snapshot) {
      this.accept(await this.api.getTrial(this.snapshot.trial_id));
    }
  }

  /** Validate a block entry against the snapshot's expected index, size,
   * and issued allocation; returns the validation outcome without
   * submitting when invalid. */
  validate(entry: BlockEntry): ValidationResult {
    const snap = this.snapshot;
    if (!snap || snap.status !== "enrolling") {
      return { ok: false, errors: ["trial is not enrolling"] };
    }
    return validateBlockEntry(
      entry,
      snap.next_block_index as number,
      snap.derived.block_size,
      snap.current_pi_a as number,
    );
  }

  async submitBlock(entry: BlockEntry): Promise<ValidationResult> {
    const result = this.validate(entry);
    if (!result.ok || !this.snapshot) {
      return result;
    }
    this.accept(await this.api.submitBlock(this.snapshot.trial_id, result.payload!));
    return result;
  }

  startPolling(): void {
    this.stopPolling();
    this.timer = setInterval(() => {
      this.refresh().catch(() => undefined);
    }, this.pollMs);
  }

  stopPolling(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  private accept(snapshot: TrialSnapshot): void {
    this.snapshot = snapshot;
    this.onChange(toTrialView(snapshot), snapshot);
  }
}
