// DOM-level behavior: submission gating, comment inputs, double-check
// banners rendered from API-delivered text.

import { beforeEach, describe, expect, it } from 'vitest';

import type { ApiClient, RoundSkeleton } from '../src/api.js';
import { ReviewConsole } from '../src/ui.js';

function makeRound(kind: 'normal' | 'double_check', count = 3): RoundSkeleton {
  const items = Array.from({ length: count }, (_, i) => ({
    id: `v${i}`,
    asset_url: `/assets/v${i}`,
    clip_span: [0, 12] as [number, number],
    triggering_attribute: kind === 'double_check' ? 'appearance' : null,
    prompt:
      kind === 'double_check'
        ? 'Please double-check whether the appearance meets the requirements for this sample and provide additional feedback.'
        : undefined,
  }));
  return { round_index: 1, kind, sampled: items.map((i) => i.id), items };
}

class StubApi {
  submitted: unknown[] = [];
  constructor(public nextRound: RoundSkeleton) {}
  assetUrl(item: { asset_url: string }) {
    return `http://stub${item.asset_url}`;
  }
  async round() {
    return this.nextRound;
  }
  async submitFeedback(_id: string, payload: unknown) {
    this.submitted.push(payload);
    return { phase: 'interactive', terminated: false };
  }
  async status() {
    return { phase: 'interactive', rounds: 0, buffer_len: 0, manifest_count: 0, policy_version: 0 };
  }
}

function mount(kind: 'normal' | 'double_check') {
  document.body.innerHTML = '<div id="app"></div>';
  const api = new StubApi(makeRound(kind));
  const consoleUi = new ReviewConsole(
    document.getElementById('app')!,
    api as unknown as ApiClient,
  );
  consoleUi.review = null;
  return { api, consoleUi };
}

describe('submission gating in the DOM', () => {
  let api: StubApi;
  let consoleUi: ReviewConsole;

  beforeEach(async () => {
    ({ api, consoleUi } = mount('normal'));
    consoleUi.sessionId = 's1';
    await consoleUi.loadRound();
  });

  it('submit stays disabled until every card has a verdict', async () => {
    const submit = document.getElementById('submit-round') as HTMLButtonElement;
    expect(submit.disabled).toBe(true);
    consoleUi.verdict('v0', 'retain');
    consoleUi.verdict('v1', 'discard');
    expect(submit.disabled).toBe(true);

    submit.click();
    await new Promise((resolve) => setTimeout(resolve, 10));
    expect(api.submitted).toHaveLength(0);

    consoleUi.verdict('v2', 'retain');
    expect(submit.disabled).toBe(false);
    submit.click();
    await new Promise((resolve) => setTimeout(resolve, 10));
    expect(api.submitted).toHaveLength(1);
  });

  it('comment input is disabled on retained cards and enabled on discarded ones', () => {
    consoleUi.verdict('v0', 'retain');
    consoleUi.verdict('v1', 'discard');
    const retained = document.querySelector('[data-video-id="v0"] .comment') as HTMLInputElement;
    const discarded = document.querySelector('[data-video-id="v1"] .comment') as HTMLInputElement;
    expect(retained.disabled).toBe(true);
    expect(discarded.disabled).toBe(false);
  });

  it('keyboard review: r and d verdict the focused card and advance', () => {
    const app = document.getElementById('app')!;
    const press = (key: string) =>
      app.dispatchEvent(new KeyboardEvent('keydown', { key, bubbles: true }));
    press('r');
    press('d');
    press('r');
    const submit = document.getElementById('submit-round') as HTMLButtonElement;
    expect(submit.disabled).toBe(false);
    expect(consoleUi.review?.item('v0').verdict).toBe('retain');
    expect(consoleUi.review?.item('v1').verdict).toBe('discard');
    expect(consoleUi.review?.item('v2').verdict).toBe('retain');
  });
});

describe('double-check rendering', () => {
  it('shows the API-delivered hint text verbatim', async () => {
    const { consoleUi } = mount('double_check');
    consoleUi.sessionId = 's1';
    await consoleUi.loadRound();
    const banner = document.getElementById('banner')!;
    expect(banner.textContent).toContain(
      'Please double-check whether the appearance meets the requirements for this sample and provide additional feedback.',
    );
    const hints = document.querySelectorAll('.attribute-hint');
    expect(hints).toHaveLength(3);
    expect(hints[0].textContent).toContain('appearance');
  });

  it('normal rounds render no banner', async () => {
    const { consoleUi } = mount('normal');
    consoleUi.sessionId = 's1';
    await consoleUi.loadRound();
    expect(document.getElementById('banner')!.innerHTML).toBe('');
  });
});
