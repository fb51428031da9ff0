/** Block entry form validation. The allocation probability is never edited
 * here: it is pre-filled from the issued value and echoed back, so the
 * server can verify the coordinator used what it was given. */

export interface BlockEntry {
  n_a: number;
  n_b: number;
  y_a: number;
  y_b: number;
}

export interface ValidationResult {
  ok: boolean;
  errors: string[];
  payload?: {
    index: number;
    pi_a: number;
    n_a: number;
    n_b: number;
    y_a: number;
    y_b: number;
  };
}

function isCount(value: number): boolean {
  return Number.isInteger(value) && value >= 0;
}

export function validateBlockEntry(
  entry: BlockEntry,
  expectedIndex: number,
  blockSize: number,
  issuedPi: number,
): ValidationResult {
  const errors: string[] = [];
  for (const [label, value] of Object.entries(entry)) {
    if (!isCount(value)) {
      errors.push(`${label} must be a non-negative integer`);
    }
  }
  if (errors.length === 0) {
    if (entry.n_a + entry.n_b !== blockSize) {
      errors.push(
        `subject counts ${entry.n_a} + ${entry.n_b} must equal the block size ${blockSize}`,
      );
    }
    if (entry.y_a > entry.n_a) {
      errors.push(`arm A successes (${entry.y_a}) exceed its subjects (${entry.n_a})`);
    }
    if (entry.y_b > entry.n_b) {
      errors.push(`arm B successes (${entry.y_b}) exceed its subjects (${entry.n_b})`);
    }
  }
  if (errors.length > 0) {
    return { ok: false, errors };
  }
  return {
    ok: true,
    errors: [],
    payload: { index: expectedIndex, pi_a: issuedPi, ...entry },
  };
}
