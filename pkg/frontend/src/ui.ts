// DOM rendering for the review console: query box, the round grid with
// retain/discard controls and comment inputs, double-check banners,
// the status bar and the manifest browser. Keyboard-first: j/k move,
// r retains, d discards, enter submits.

import { ApiClient, RoundSkeleton, SessionStatus } from './api.js';
import { RoundReview } from './state.js';

export interface ConsoleCallbacks {
  onSubmitted?: (terminated: boolean) => void;
  onError?: (error: unknown) => void;
}

export class ReviewConsole {
  review: RoundReview | null = null;
  sessionId: string | null = null;
  private submitting = false;
  private statusTimer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private callbacks: ConsoleCallbacks = {},
  ) {
    this.root.innerHTML = `
      <header>
        <h1>video collection console</h1>
        <div id="status-bar" class="status">no session</div>
      </header>
      <section id="query-section">
        <input id="query-input" type="text" placeholder="describe the dataset you want" />
        <button id="query-send">send</button>
      </section>
      <section id="banner"></section>
      <section id="grid" class="grid"></section>
      <section id="controls">
        <button id="submit-round" disabled>submit round</button>
        <button id="start-auto" hidden>start automatic collection</button>
        <button id="show-manifest" hidden>view manifest</button>
      </section>
      <section id="manifest" hidden></section>
    `;
    this.element('query-send').addEventListener('click', () => void this.startSession());
    this.element('submit-round').addEventListener('click', () => void this.submitRound());
    this.element('start-auto').addEventListener('click', () => void this.startAuto());
    this.element('show-manifest').addEventListener('click', () => void this.showManifest());
    this.root.addEventListener('keydown', (event) => this.onKey(event as KeyboardEvent));
  }

  element(id: string): HTMLElement {
    const found = this.root.querySelector(`#${id}`);
    if (!found) throw new Error(`missing element #${id}`);
    return found as HTMLElement;
  }

  async startSession(): Promise<void> {
    const input = this.element('query-input') as HTMLInputElement;
    const query = input.value.trim();
    if (!query) return;
    try {
      const created = await this.api.createSession(query);
      this.sessionId = created.session_id;
      this.watchStatus();
      await this.api.waitForPhase(this.sessionId, 'interactive');
      await this.loadRound();
    } catch (error) {
      this.callbacks.onError?.(error);
    }
  }

  async attach(sessionId: string): Promise<void> {
    this.sessionId = sessionId;
    this.watchStatus();
    await this.loadRound();
  }

  async loadRound(): Promise<void> {
    if (!this.sessionId) return;
    const round = await this.api.round(this.sessionId);
    this.review = new RoundReview(round);
    this.renderRound(round);
  }

  renderRound(round: RoundSkeleton): void {
    const banner = this.element('banner');
    if (round.kind === 'double_check') {
      const hints = [...new Set(round.items.map((item) => item.prompt ?? ''))].filter(Boolean);
      banner.innerHTML = hints
        .map((hint) => `<div class="double-check-banner">${escapeHtml(hint)}</div>`)
        .join('');
    } else {
      banner.innerHTML = '';
    }

    const grid = this.element('grid');
    grid.innerHTML = '';
    round.items.forEach((item, index) => {
      const card = document.createElement('div');
      card.className = 'card';
      card.dataset.videoId = item.id;
      card.tabIndex = 0;
      const span = item.clip_span ? `${item.clip_span[0].toFixed(1)}s - ${item.clip_span[1].toFixed(1)}s` : 'full clip';
      const hint = item.triggering_attribute
        ? `<div class="attribute-hint">check: ${escapeHtml(item.triggering_attribute)}</div>`
        : '';
      card.innerHTML = `
        <video src="${this.api.assetUrl(item)}" controls preload="none"></video>
        <div class="clip-span">${span}</div>
        ${hint}
        <div class="verdict">
          <button class="retain">retain</button>
          <button class="discard">discard</button>
        </div>
        <input class="comment" type="text" placeholder="why discard?" disabled />
      `;
      card.querySelector('.retain')!.addEventListener('click', () => this.verdict(item.id, 'retain'));
      card.querySelector('.discard')!.addEventListener('click', () => this.verdict(item.id, 'discard'));
      const comment = card.querySelector('.comment') as HTMLInputElement;
      comment.addEventListener('input', () => {
        if (this.review?.commentEnabled(item.id)) this.review.setComment(item.id, comment.value);
      });
      if (index === 0) card.classList.add('cursor');
      grid.appendChild(card);
    });
    this.syncControls();
  }

  verdict(id: string, verdict: 'retain' | 'discard'): void {
    if (!this.review) return;
    this.review.setVerdict(id, verdict);
    const card = this.root.querySelector(`[data-video-id="${id}"]`) as HTMLElement;
    card.classList.toggle('retained', verdict === 'retain');
    card.classList.toggle('discarded', verdict === 'discard');
    const comment = card.querySelector('.comment') as HTMLInputElement;
    comment.disabled = !this.review.commentEnabled(id);
    if (comment.disabled) comment.value = '';
    this.syncControls();
  }

  syncControls(): void {
    const submit = this.element('submit-round') as HTMLButtonElement;
    submit.disabled = !this.review?.canSubmit || this.submitting;
  }

  async submitRound(): Promise<void> {
    if (!this.review || !this.sessionId || !this.review.canSubmit || this.submitting) return;
    this.submitting = true;
    this.syncControls();
    try {
      const result = await this.api.submitFeedback(this.sessionId, this.review.toPayload());
      this.review = null;
      (this.element('start-auto') as HTMLButtonElement).hidden = !result.terminated;
      this.callbacks.onSubmitted?.(result.terminated);
      if (!result.terminated) await this.loadRound();
      else this.element('grid').innerHTML = '<div class="done">all rounds reviewed</div>';
    } catch (error) {
      // a stale round means the server moved on: refetch and re-render
      await this.loadRound().catch(() => undefined);
      this.callbacks.onError?.(error);
    } finally {
      this.submitting = false;
      this.syncControls();
    }
  }

  async startAuto(budget = 50): Promise<void> {
    if (!this.sessionId) return;
    try {
      await this.api.startAuto(this.sessionId, budget);
      (this.element('show-manifest') as HTMLButtonElement).hidden = false;
    } catch (error) {
      this.callbacks.onError?.(error);
    }
  }

  async showManifest(): Promise<void> {
    if (!this.sessionId) return;
    const entries = await this.api.manifest(this.sessionId);
    const section = this.element('manifest');
    section.hidden = false;
    section.innerHTML = `
      <h2>collected dataset (${entries.length})</h2>
      <ul>${entries
        .map(
          (entry) =>
            `<li><code>${escapeHtml(entry.video_id)}</code> ${escapeHtml(entry.source_url)} <em>${escapeHtml(entry.decision_provenance)}</em></li>`,
        )
        .join('')}</ul>
    `;
  }

  watchStatus(): void {
    if (this.statusTimer) clearInterval(this.statusTimer);
    const update = async () => {
      if (!this.sessionId) return;
      try {
        const status = await this.api.status(this.sessionId);
        this.renderStatus(status);
      } catch {
        // transient; next poll retries
      }
    };
    void update();
    this.statusTimer = setInterval(() => void update(), 1500);
  }

  renderStatus(status: SessionStatus): void {
    this.element('status-bar').textContent =
      `phase ${status.phase} | rounds ${status.rounds} | buffer ${status.buffer_len} | ` +
      `collected ${status.manifest_count} | policy v${status.policy_version}`;
  }

  stop(): void {
    if (this.statusTimer) clearInterval(this.statusTimer);
    this.statusTimer = null;
  }

  private onKey(event: KeyboardEvent): void {
    if (!this.review) return;
    const target = event.target as HTMLElement | null;
    if (target && target.tagName === 'INPUT') return;
    const cards = [...this.root.querySelectorAll('.card')] as HTMLElement[];
    if (!cards.length) return;
    let cursor = this.review.cursor;
    if (event.key === 'j' || event.key === 'ArrowRight') cursor = Math.min(cursor + 1, cards.length - 1);
    else if (event.key === 'k' || event.key === 'ArrowLeft') cursor = Math.max(cursor - 1, 0);
    else if (event.key === 'r' || event.key === 'd') {
      const id = cards[cursor].dataset.videoId!;
      this.verdict(id, event.key === 'r' ? 'retain' : 'discard');
      cursor = Math.min(cursor + 1, cards.length - 1);
    } else if (event.key === 'Enter' && this.review.canSubmit) {
      void this.submitRound();
      return;
    } else {
      return;
    }
    cards.forEach((card, index) => card.classList.toggle('cursor', index === cursor));
    this.review.cursor = cursor;
    event.preventDefault();
  }
}

function escapeHtml(text: string): string {
  return text
    .replaceAll('&', '&amp;')
    .replaceAll('<', '&lt;')
    .replaceAll('>', '&gt;')
    .replaceAll('"', '&quot;');
}
