// @vitest-environment jsdom
import { describe, expect, it } from 'vitest';

import { ApiError } from '../../src/api.js';
import type { Action, CocreationApi } from '../../src/api.js';
import { mountApp } from '../../src/app.js';
import type { Envelope, Proposal, ServerEvent, SessionDoc } from '../../src/types.js';

const DRAFT = {
  schemaVersion: '1', orderId: 'ord-1', sessionId: 'ses-1',
  startDate: '2026-08-21', durationDays: 7, currency: 'EUR',
  totalCostCents: 780000,
  orderItems: [{
    offeringId: 'po-slice-gold', offeringName: 'On-demand Network Slice',
    tier: 'Gold', unitCostCents: 70000, billing: 'PerDay',
    parameters: { cityName: 'Patras', sliceProfile: 'eMBB' },
  }],
};

const PROPOSAL: Proposal = {
  proposalId: 'p-1',
  bundle: ['po-slice-gold'],
  bundleNames: [['On-demand Network Slice', 'Gold']],
  quote: {
    lineItems: [{
      offeringId: 'po-slice-gold', unitCostCents: 70000, billing: 'PerDay',
      chargedUnits: 7, lineTotalCents: 490000,
    }],
    durationDays: 7, totalCostCents: 780000, currency: 'EUR',
    budgetCents: 900000, withinBudget: true,
  },
  rationale: 'covers the stated constraints',
  groundingEvidence: ['call-1'],
};

function doc(overrides: Partial<SessionDoc>): SessionDoc {
  return {
    sessionId: 'ses-1', trajectory: 'OrderManagement',
    createdAt: 't', stage: 'Q1_Ingestion', stageHistory: [],
    contract: {
      goalText: 'XR event', location: 'Patras', budgetCents: 900000,
      budgetPeriod: 'total', durationHintDays: 7, sliceProfile: 'eMBB',
      status: 'Grounded', qosConstraints: [], policyConstraints: [],
    },
    proposals: [], selected: [], temporal: null, orderDraft: null,
    orderRecordId: null,
    findings: { hallucinated: [], lowerLayer: [], directOrderAttempts: 0 },
    budgetWarning: false, failureCause: null, abortReason: null, timings: {},
    ...overrides,
  };
}

type Script = {
  stage: string;
  actLog: Action[];
};

function stubApi(script: Script) {
  const api = {
    baseUrl: '',
    eventsUrl: (id: string) => `/sessions/${id}/events`,
    openSession: async (): Promise<Envelope> =>
      ({ schemaVersion: '1', session: doc({}) }),
    act: async (_id: string, action: Action): Promise<Envelope> => {
      script.actLog.push(action);
      switch (action.action) {
        case 'propose':
          return {
            schemaVersion: '1',
            session: doc({ proposals: [PROPOSAL] }),
            reply: 'I suggest the Gold slice. That totals 7,800€ for the week.',
          };
        case 'confirm':
          if (script.stage !== 'Q5_Confirmation') {
            throw new ApiError(409, 'NotConfirmed', 'order is not confirmed yet');
          }
          return {
            schemaVersion: '1',
            session: doc({ orderDraft: DRAFT, orderRecordId: 1 }),
            reply: 'Order placed.',
          };
        case 'draft':
          return { schemaVersion: '1', session: doc({ orderDraft: DRAFT, proposals: [PROPOSAL] }) };
        default:
          return { schemaVersion: '1', session: doc({ proposals: [PROPOSAL] }) };
      }
    },
  };
  return api as unknown as CocreationApi;
}

function mount() {
  const script: Script = { stage: 'Q1_Ingestion', actLog: [] };
  let feed: ((event: ServerEvent) => void) | null = null;
  const root = document.createElement('div');
  document.body.append(root);
  const app = mountApp(root, stubApi(script), {
    subscribe: (_url, onEvent) => {
      feed = onEvent;
      return { done: new Promise<void>(() => undefined), abort: () => undefined };
    },
  });
  let seq = 0;
  const push = (type: string, data: Record<string, unknown> = {}) => {
    seq += 1;
    if (type === 'StageChanged') script.stage = String(data['stage']);
    feed!({ seq, type, sessionId: 'ses-1', timestamp: 't', data });
  };
  const get = <T extends HTMLElement>(testid: string): T => {
    const node = root.querySelector(`[data-testid="${testid}"]`);
    if (!node) throw new Error(`missing [data-testid=${testid}]`);
    return node as T;
  };
  return { app, root, push, get, script };
}

describe('co-creation console', () => {
  it('keeps the confirm control locked until Q5 with a draft', async () => {
    const { app, push, get } = mount();
    await app.open('XR event in Patras, 9,000€ for a week');
    push('StageChanged', { stage: 'Q1_Ingestion' });
    expect(get<HTMLButtonElement>('confirm-open').disabled).toBe(true);

    await app.dispatch({ action: 'ground' });
    push('StageChanged', { stage: 'Q2_Alternatives' });
    await app.dispatch({ action: 'propose' });
    expect(get<HTMLButtonElement>('confirm-open').disabled).toBe(true);

    push('StageChanged', { stage: 'Q3_Combination' });
    push('StageChanged', { stage: 'Q4_Temporal' });
    push('StageChanged', { stage: 'Q5_Confirmation' });
    await app.dispatch({ action: 'draft' });
    expect(get<HTMLButtonElement>('confirm-open').disabled).toBe(false);
  });

  it('requires the second modal click before posting confirm', async () => {
    const { app, push, get, script } = mount();
    await app.open('XR event');
    push('StageChanged', { stage: 'Q5_Confirmation' });
    await app.dispatch({ action: 'draft' });

    get<HTMLButtonElement>('confirm-open').click();
    expect(get('confirm-modal').classList.contains('hidden')).toBe(false);
    expect(script.actLog.filter((a) => a.action === 'confirm')).toHaveLength(0);

    get<HTMLButtonElement>('confirm-go').click();
    await Promise.resolve();
    expect(script.actLog.filter((a) => a.action === 'confirm')).toHaveLength(1);
  });

  it('shows the order only after the OrderPlaced event arrives', async () => {
    const { app, push, get } = mount();
    await app.open('XR event');
    push('StageChanged', { stage: 'Q5_Confirmation' });
    await app.dispatch({ action: 'draft' });
    await app.dispatch({ action: 'confirm', confirmation: 'yes' });

    // the POST succeeded and the envelope carries orderRecordId, but the
    // panel must wait for the server's event
    expect(get('placed-order').classList.contains('hidden')).toBe(true);

    push('StageChanged', { stage: 'Confirmed' });
    push('OrderPlaced', { orderId: 'ord-1', recordId: 1, totalCostCents: 780000 });
    expect(get('placed-order').classList.contains('hidden')).toBe(false);
    expect(get('placed-order').textContent).toContain('ord-1');
  });

  it('renders a forced early confirm as an inline 409', async () => {
    const { app, push, get } = mount();
    await app.open('XR event');
    push('StageChanged', { stage: 'Q2_Alternatives' });
    await app.dispatch({ action: 'confirm', confirmation: 'yes' });
    const error = get('inline-error');
    expect(error.classList.contains('hidden')).toBe(false);
    expect(error.textContent).toContain('409');
    expect(error.textContent).toContain('NotConfirmed');
    expect(get('placed-order').classList.contains('hidden')).toBe(true);
  });

  it('dims assistant turns that state their own figures', async () => {
    const { app, push, root } = mount();
    await app.open('XR event');
    push('StageChanged', { stage: 'Q2_Alternatives' });
    await app.dispatch({ action: 'propose' });
    const stated = root.querySelectorAll('.turn.model-stated');
    expect(stated).toHaveLength(1);
    expect(stated[0]!.textContent).toContain('engine quote governs');
  });

  it('walks the stage ladder as events arrive', async () => {
    const { app, push, get } = mount();
    await app.open('XR event');
    push('StageChanged', { stage: 'Q1_Ingestion' });
    push('StageChanged', { stage: 'Q2_Alternatives' });
    const items = get('ladder').querySelectorAll('li');
    expect(items[0]!.className).toBe('done');
    expect(items[1]!.className).toBe('current');
    expect(items[4]!.className).toBe('pending');
  });
});
