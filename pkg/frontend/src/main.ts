/** DOM bootstrap: wires the controller, form, and chart into the page.
 * All statistics come from server snapshots; this file only renders. */

import { ApiClient } from "./api";
import { trajectorySvg } from "./chart";
import { DashboardController } from "./controller";
import type { TrialSnapshot } from "./types";
import type { TrialView } from "./view";

const qs = <T extends HTMLElement>(sel: string): T => {
  const el = document.querySelector<T>(sel);
  if (!el) throw new Error(`missing element ${sel}`);
  return el;
};

const api = new ApiClient(
  (window as { RARBLOCK_API?: string }).RARBLOCK_API ?? "http://127.0.0.1:8400",
);

function fmt(value: number | string): string {
  return typeof value === "number" && !Number.isInteger(value)
    ? value.toFixed(4)
    : String(value);
}

function render(view: TrialView, snapshot: TrialSnapshot): void {
  const banner = qs<HTMLDivElement>("#banner");
  banner.textContent = view.banner.status;
  banner.dataset.tone = view.banner.tone;

  qs<HTMLDListElement>("#headline").innerHTML = view.headline
    .concat(view.statistic)
    .map((item) => `<dt>${item.label}</dt><dd data-source="${item.source}">${fmt(item.value)}</dd>`)
    .join("");

  qs<HTMLTableSectionElement>("#blocks").innerHTML = view.blocks
    .map(
      (row) =>
        `<tr>${row.cells.map((c) => `<td data-source="${c.source}">${fmt(c.value)}</td>`).join("")}</tr>`,
    )
    .join("");

  qs<HTMLDivElement>("#chart").innerHTML = trajectorySvg(
    view.trajectory.points,
    view.trajectory.terminal,
  );

  const form = qs<HTMLFormElement>("#block-form");
  const enrolling = snapshot.status === "enrolling";
  form.hidden = !enrolling;
  if (enrolling) {
    qs<HTMLInputElement>("#f-index").value = String(snapshot.next_block_index);
    qs<HTMLInputElement>("#f-pi").value = String(snapshot.current_pi_a);
    qs<HTMLSpanElement>("#f-size").textContent = String(snapshot.derived.block_size);
  }
}

const controller = new DashboardController(api, render);

function entryFromForm() {
  return {
    n_a: Number(qs<HTMLInputElement>("#f-na").value),
    n_b: Number(qs<HTMLInputElement>("#f-nb").value),
    y_a: Number(qs<HTMLInputElement>("#f-ya").value),
    y_b: Number(qs<HTMLInputElement>("#f-yb").value),
  };
}

function showErrors(errors: string[]): void {
  qs<HTMLUListElement>("#form-errors").innerHTML = errors
    .map((e) => `<li>${e}</li>`)
    .join("");
  qs<HTMLButtonElement>("#f-submit").disabled = errors.length > 0;
}

qs<HTMLFormElement>("#block-form").addEventListener("input", () => {
  showErrors(controller.validate(entryFromForm()).errors);
});

qs<HTMLFormElement>("#block-form").addEventListener("submit", (event) => {
  event.preventDefault();
  controller
    .submitBlock(entryFromForm())
    .then((result) => showErrors(result.errors))
    .catch((err) => showErrors([String(err.message ?? err)]));
});

qs<HTMLButtonElement>("#load").addEventListener("click", () => {
  controller
    .loadTrial(qs<HTMLInputElement>("#trial-id").value.trim())
    .then(() => controller.startPolling())
    .catch((err) => showErrors([String(err.message ?? err)]));
});
