// Round review state. The invariants enforced here make an invalid
// feedback payload unrepresentable: submission requires a verdict on
// every item, and comments exist only where the service accepts them
// (rejected items on normal rounds, any item on double-check rounds).

import type { FeedbackPayload, RoundSkeleton } from './api.js';

export type Verdict = 'retain' | 'discard' | null;

export interface ItemReview {
  id: string;
  verdict: Verdict;
  comment: string;
}

export class RoundReview {
  readonly items: ItemReview[];
  cursor = 0;

  constructor(public readonly round: RoundSkeleton) {
    this.items = round.items.map((item) => ({ id: item.id, verdict: null, comment: '' }));
  }

  get isDoubleCheck(): boolean {
    return this.round.kind === 'double_check';
  }

  item(id: string): ItemReview {
    const found = this.items.find((entry) => entry.id === id);
    if (!found) throw new Error(`unknown item ${id}`);
    return found;
  }

  setVerdict(id: string, verdict: Verdict): void {
    const entry = this.item(id);
    entry.verdict = verdict;
    if (!this.commentEnabled(id)) entry.comment = '';
  }

  setComment(id: string, text: string): void {
    if (!this.commentEnabled(id)) {
      throw new Error('comments are only collected on discarded items');
    }
    this.item(id).comment = text;
  }

  // comments are only asked for on rejected videos; double-check rounds
  // accept feedback text on any reviewed sample
  commentEnabled(id: string): boolean {
    const entry = this.item(id);
    if (this.isDoubleCheck) return entry.verdict !== null;
    return entry.verdict === 'discard';
  }

  get allVerdicted(): boolean {
    return this.items.every((entry) => entry.verdict !== null);
  }

  get canSubmit(): boolean {
    return this.allVerdicted;
  }

  toPayload(): FeedbackPayload {
    if (!this.canSubmit) {
      throw new Error('every item needs a retain/discard verdict before submitting');
    }
    const accepted = this.items.filter((e) => e.verdict === 'retain').map((e) => e.id);
    const rejected = this.items.filter((e) => e.verdict === 'discard').map((e) => e.id);
    const comments = this.items
      .filter((e) => e.comment.trim() && this.commentEnabled(e.id))
      .map((e) => ({ video_id: e.id, text: e.comment.trim() }));
    return {
      round_index: this.round.round_index,
      sampled: [...this.round.sampled],
      accepted,
      rejected,
      comments,
      kind: this.round.kind,
    };
  }
}
