import { ApiError, type WorkbenchApi } from "./api.js";
import { formatDelta } from "./format.js";
import type {
  CellEdit,
  ClassInfo,
  DiffPayload,
  EvalReport,
  SavePayload,
} from "./types.js";

export interface DeltaRow {
  classId: number;
  verb: string;
  object: string;
  rare: boolean;
  delta: number | null;
  text: string;
}

export interface DeltaSummary {
  full: string;
  rare: string;
  nonrare: string;
}

// Client-side session state for the tuning UI. All mutation goes through
// the service; the model tracks the revision the server reports so stale
// evaluations are retried instead of silently shown.
export class Workbench {
  revision = 0;
  parts: string[] = [];
  classes: ClassInfo[] = [];
  customRows: Record<string, number[]> = {};

  constructor(private readonly api: WorkbenchApi) {}

  async load(): Promise<void> {
    const meta = await this.api.classes();
    this.parts = meta.parts;
    this.classes = meta.classes;
    await this.refreshRules();
  }

  async refreshRules(): Promise<void> {
    const rules = await this.api.rules("custom");
    this.customRows = rules.rows;
    this.revision = rules.revision;
  }

  weightAt(classId: number, part: string): number {
    const row = this.customRows[String(classId)];
    const index = this.parts.indexOf(part);
    if (row === undefined || index < 0 || row[index] === undefined) {
      throw new Error(`no custom weight for class ${classId}, part ${part}`);
    }
    return row[index];
  }

  async applyEdit(edit: CellEdit): Promise<number> {
    const { revision } = await this.api.patchCustom(edit.classId, edit.part, edit.weight);
    const row = this.customRows[String(edit.classId)];
    const index = this.parts.indexOf(edit.part);
    if (row !== undefined && index >= 0) row[index] = edit.weight;
    this.revision = revision;
    return revision;
  }

  async applyScript(edits: CellEdit[]): Promise<number> {
    for (const edit of edits) {
      await this.applyEdit(edit);
    }
    return this.revision;
  }

  // Evaluate the custom variant fenced to our revision; on a 409 the
  // server moved on (or we did), so resync once and retry.
  async evaluateCustom(setting = "default"): Promise<EvalReport> {
    try {
      const result = await this.api.evaluate("custom", setting, this.revision);
      return result.report;
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        await this.refreshRules();
        const retry = await this.api.evaluate("custom", setting, this.revision);
        return retry.report;
      }
      throw error;
    }
  }

  async deltas(setting = "default"): Promise<DiffPayload> {
    const diff = await this.api.diff("original", "custom", setting);
    if (diff.b_revision === this.revision) return diff;
    // the matrix changed under us; resync and fetch a fresh diff
    await this.refreshRules();
    return this.api.diff("original", "custom", setting);
  }

  deltaTable(diff: DiffPayload): DeltaRow[] {
    const byId = new Map(this.classes.map((c) => [c.class_id, c]));
    return Object.keys(diff.per_class_delta)
      .map(Number)
      .sort((a, b) => a - b)
      .map((classId) => {
        const info = byId.get(classId);
        const delta = diff.per_class_delta[String(classId)] ?? null;
        return {
          classId,
          verb: info?.verb ?? "?",
          object: info?.object ?? "?",
          rare: info?.rare ?? false,
          delta,
          text: formatDelta(delta),
        };
      });
  }

  deltaSummary(diff: DiffPayload): DeltaSummary {
    return {
      full: formatDelta(diff.map_full_delta),
      rare: formatDelta(diff.map_rare_delta),
      nonrare: formatDelta(diff.map_nonrare_delta),
    };
  }

  save(path?: string): Promise<SavePayload> {
    return this.api.saveCustom(path);
  }
}
