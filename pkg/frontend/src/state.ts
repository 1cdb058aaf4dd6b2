import type {
  Envelope,
  Findings,
  OrderDraft,
  Proposal,
  ServerEvent,
  SessionDoc,
  Stage,
} from './types.js';

export type TranscriptEntry = {
  role: 'user' | 'assistant' | 'notice';
  text: string;
  /** Assistant turns that state a € amount get a dimmed "model-stated" tag. */
  modelStatedCost: boolean;
};

export type PlacedOrder = {
  orderId: string;
  recordId: number | null;
  totalCostCents: number | null;
};

export type Connection = 'idle' | 'live' | 'lost';

export type ViewState = {
  sessionId: string | null;
  /** Rendered stage; driven exclusively by StageChanged events. */
  stage: Stage | null;
  stageHistory: Stage[];
  proposals: Proposal[];
  selected: string[];
  temporal: { startDate: string; durationDays: number } | null;
  draft: OrderDraft | null;
  budgetCents: number | null;
  lastQuoteCents: number | null;
  budgetWarning: boolean;
  findings: Findings;
  transcript: TranscriptEntry[];
  timeline: ServerEvent[];
  /** Set only when the server acknowledges OrderPlaced on the stream. */
  placedOrder: PlacedOrder | null;
  confirmModalOpen: boolean;
  inlineError: string | null;
  connection: Connection;
  busy: boolean;
};

const COST_PATTERN = /\d[\d,.]*\s?€/;

export function initialState(): ViewState {
  return {
    sessionId: null,
    stage: null,
    stageHistory: [],
    proposals: [],
    selected: [],
    temporal: null,
    draft: null,
    budgetCents: null,
    lastQuoteCents: null,
    budgetWarning: false,
    findings: { hallucinated: [], lowerLayer: [], directOrderAttempts: 0 },
    transcript: [],
    timeline: [],
    placedOrder: null,
    confirmModalOpen: false,
    inlineError: null,
    connection: 'idle',
    busy: false,
  };
}

/**
 * Fold a streamed event into the view. The stage badge and the placed-order
 * panel move on events only, so the client can never show an order the
 * server did not acknowledge.
 */
export function applyServerEvent(state: ViewState, event: ServerEvent): ViewState {
  const next: ViewState = { ...state, timeline: [...state.timeline, event] };
  switch (event.type) {
    case 'StageChanged': {
      const stage = event.data['stage'] as Stage;
      next.stage = stage;
      next.stageHistory = [...state.stageHistory, stage];
      break;
    }
    case 'OrderPlaced': {
      next.placedOrder = {
        orderId: String(event.data['orderId'] ?? ''),
        recordId: (event.data['recordId'] as number | undefined) ?? null,
        totalCostCents: (event.data['totalCostCents'] as number | undefined) ?? null,
      };
      break;
    }
    case 'QuoteUpdated': {
      const total = event.data['totalCostCents'];
      if (typeof total === 'number') next.lastQuoteCents = total;
      break;
    }
    case 'HallucinationFinding': {
      const name = String(event.data['name'] ?? '');
      if (name && !state.findings.hallucinated.includes(name)) {
        next.findings = {
          ...state.findings,
          hallucinated: [...state.findings.hallucinated, name],
        };
      }
      break;
    }
    default:
      break;
  }
  return next;
}

/**
 * Sync the non-authoritative panels from a response envelope. Stage and
 * placement deliberately stay untouched: those belong to the event stream.
 */
export function applyEnvelope(state: ViewState, envelope: Envelope): ViewState {
  const doc: SessionDoc = envelope.session;
  const next: ViewState = {
    ...state,
    sessionId: doc.sessionId,
    proposals: doc.proposals,
    selected: doc.selected,
    temporal: doc.temporal,
    draft: doc.orderDraft,
    budgetCents: doc.contract.budgetCents,
    budgetWarning: doc.budgetWarning,
    findings: doc.findings,
  };
  if (envelope.reply) {
    next.transcript = [
      ...state.transcript,
      {
        role: 'assistant',
        text: envelope.reply,
        modelStatedCost: COST_PATTERN.test(envelope.reply),
      },
    ];
  }
  return next;
}

export function pushUserText(state: ViewState, text: string): ViewState {
  return {
    ...state,
    transcript: [...state.transcript, { role: 'user', text, modelStatedCost: false }],
  };
}

export function canConfirm(state: ViewState): boolean {
  return state.stage === 'Q5_Confirmation' && state.draft !== null;
}

export function isTerminal(state: ViewState): boolean {
  return state.stage === 'Confirmed' || state.stage === 'Aborted';
}

/** Engine quote against the stated budget, for the budget bar. */
export function budgetRatio(state: ViewState): {
  quoteCents: number | null;
  budgetCents: number | null;
  percent: number | null;
  over: boolean;
} {
  const quote = state.draft?.totalCostCents
    ?? state.lastQuoteCents
    ?? state.proposals[0]?.quote.totalCostCents
    ?? null;
  const budget = state.budgetCents;
  if (quote === null || budget === null || budget <= 0) {
    return { quoteCents: quote, budgetCents: budget, percent: null, over: false };
  }
  return {
    quoteCents: quote,
    budgetCents: budget,
    percent: Math.min(100, Math.round((quote / budget) * 100)),
    over: quote > budget,
  };
}

export function formatEuros(cents: number): string {
  const euros = cents / 100;
  const formatted = Number.isInteger(euros)
    ? euros.toLocaleString('en-US')
    : euros.toLocaleString('en-US', { minimumFractionDigits: 2, maximumFractionDigits: 2 });
  return `${formatted}€`;
}

/** The stage ladder drives the to-do panel: done, current, or pending. */
export const STAGE_LADDER: { stage: Stage; label: string }[] = [
  { stage: 'Q1_Ingestion', label: 'Describe the goal' },
  { stage: 'Q2_Alternatives', label: 'Review alternatives' },
  { stage: 'Q3_Combination', label: 'Pick a combination' },
  { stage: 'Q4_Temporal', label: 'Set dates' },
  { stage: 'Q5_Confirmation', label: 'Confirm the order' },
];

export function ladderStatus(
  state: ViewState,
  stage: Stage,
): 'done' | 'current' | 'pending' {
  if (state.stage === stage) return 'current';
  if (state.stageHistory.includes(stage)) return 'done';
  if (state.stage === 'Confirmed') return 'done';
  return 'pending';
}
