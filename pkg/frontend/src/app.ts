// Browser entry point: a rule grid with editable cells, live AP deltas
// against the all-ones original, and a save button. Talks to the same
// origin it was served from.

import { ApiError, WorkbenchClient } from "./api.js";
import { heatmapGrid } from "./heatmap.js";
import { Workbench } from "./model.js";

const client = new WorkbenchClient("");
const workbench = new Workbench(client);

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function statusLine(): HTMLElement {
  const node = document.getElementById("status");
  if (!node) throw new Error("missing #status element");
  return node;
}

function setStatus(text: string, isError = false): void {
  const node = statusLine();
  node.textContent = text;
  node.classList.toggle("error", isError);
}

async function refreshDeltas(): Promise<void> {
  const diff = await workbench.deltas();
  const summary = workbench.deltaSummary(diff);
  const node = document.getElementById("summary");
  if (node) {
    node.textContent =
      `mAP deltas vs original (pp): full ${summary.full}, ` +
      `rare ${summary.rare}, non-rare ${summary.nonrare}`;
  }
  for (const row of workbench.deltaTable(diff)) {
    const cell = document.getElementById(`delta-${row.classId}`);
    if (cell) {
      cell.textContent = row.text;
      cell.className = row.delta === null ? "na" : row.delta >= 0 ? "up" : "down";
    }
  }
  setStatus(`revision ${workbench.revision}: deltas refreshed`);
}

async function onCellChange(classId: number, part: string, input: HTMLInputElement) {
  const weight = Number(input.value);
  try {
    await workbench.applyEdit({ classId, part, weight });
    setStatus(`revision ${workbench.revision}: set class ${classId} ${part} = ${weight}`);
    await refreshDeltas();
  } catch (error) {
    if (error instanceof ApiError) {
      setStatus(`edit rejected (${error.status}): ${error.message}`, true);
      input.value = String(workbench.weightAt(classId, part));
    } else {
      throw error;
    }
  }
}

function renderGrid(): void {
  const container = document.getElementById("grid");
  if (!container) throw new Error("missing #grid element");
  container.textContent = "";
  const table = el("table");
  const head = el("tr");
  head.appendChild(el("th", undefined, "class"));
  for (const part of workbench.parts) head.appendChild(el("th", undefined, part));
  head.appendChild(el("th", undefined, "ΔAP (pp)"));
  table.appendChild(head);

  const grid = heatmapGrid(workbench.customRows, workbench.parts);
  const byId = new Map(workbench.classes.map((c) => [c.class_id, c]));
  for (const cells of grid) {
    const first = cells[0];
    if (!first) continue;
    const info = byId.get(first.classId);
    const tr = el("tr");
    const label = `${first.classId} ${info?.verb ?? "?"}/${info?.object ?? "?"}`;
    tr.appendChild(el("th", info?.rare ? "rare" : undefined, label));
    for (const cell of cells) {
      const td = el("td", `w${cell.bucket}`);
      const input = el("input") as HTMLInputElement;
      input.type = "number";
      input.min = "0";
      input.max = "1";
      input.step = "0.05";
      input.value = cell.label;
      input.disabled = !(info?.rare ?? false) && cell.weight === 1;
      input.addEventListener("change", () => {
        void onCellChange(cell.classId, cell.part, input);
      });
      td.appendChild(input);
      tr.appendChild(td);
    }
    const delta = el("td");
    delta.id = `delta-${first.classId}`;
    delta.textContent = "–";
    tr.appendChild(delta);
    table.appendChild(tr);
  }
  container.appendChild(table);
}

async function main(): Promise<void> {
  await workbench.load();
  renderGrid();
  await refreshDeltas();

  const save = document.getElementById("save");
  save?.addEventListener("click", () => {
    void workbench
      .save()
      .then((saved) => setStatus(`saved revision ${saved.revision} to ${saved.path}`))
      .catch((error: unknown) => {
        const message = error instanceof ApiError ? error.message : String(error);
        setStatus(`save failed: ${message}`, true);
      });
  });
  const refresh = document.getElementById("refresh");
  refresh?.addEventListener("click", () => {
    void refreshDeltas();
  });
}

void main().catch((error: unknown) => {
  setStatus(`failed to load: ${String(error)}`, true);
});
