/** Wire types mirroring the stancemon service payloads. */

export type Rating = '1' | '2' | '3' | '4' | '5' | 'Ambiguous';

export interface TaskView {
  sentence_id: string;
  text: string;
  done: number;
  total: number;
  guideline_version: string;
  allowed_ratings: Rating[];
  /** rating -> collapsed stance label, provided by the server. */
  rating_labels: Record<Rating, string>;
}

export interface SubmitAck {
  sentence_id: string;
  annotator: string;
  raw_rating: Rating;
  label: string;
  created_at: string;
}

export interface ProgressView {
  annotators: Record<string, { assigned: number; done: number }>;
  live_records: number;
}

export interface ClientConfig {
  baseUrl: string;
  annotator: string;
  token?: string;
}
