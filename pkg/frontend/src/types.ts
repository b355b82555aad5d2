// Payload shapes of the scoring service's JSON API. Field names mirror
// the wire format exactly, so everything stays snake_case here.

export const PART_NAMES = [
  "RFoot",
  "RThigh",
  "LThigh",
  "LFoot",
  "Hip",
  "Head",
  "RHand",
  "RArm",
  "LArm",
  "LHand",
] as const;

export type PartName = (typeof PART_NAMES)[number];

export interface HealthPayload {
  status: string;
  revision: number;
  variants: string[];
}

export interface ClassInfo {
  class_id: number;
  verb: string;
  object: string;
  train_count: number;
  rare: boolean;
}

export interface ClassesPayload {
  rarity_threshold: number;
  parts: string[];
  classes: ClassInfo[];
}

export interface RulesPayload {
  version: number;
  kind: string;
  parts: string[];
  rows: Record<string, number[]>;
  revision: number;
}

export interface EvalReport {
  setting: string;
  per_class_ap: Record<string, number>;
  undefined_classes: number[];
  map_full: number | null;
  map_rare: number | null;
  map_nonrare: number | null;
}

export interface EvaluatePayload {
  variant: string;
  setting: string;
  revision: number;
  report: EvalReport;
}

export interface DiffPayload {
  setting: string;
  a: string;
  b: string;
  a_revision: number;
  b_revision: number;
  per_class_delta: Record<string, number | null>;
  map_full_delta: number | null;
  map_rare_delta: number | null;
  map_nonrare_delta: number | null;
}

export interface SavePayload {
  path: string;
  revision: number;
}

export interface CellEdit {
  classId: number;
  part: string;
  weight: number;
}
