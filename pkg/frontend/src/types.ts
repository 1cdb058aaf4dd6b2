/** Server document shapes, mirroring docs/formats.md. */

export type Stage =
  | 'Q1_Ingestion'
  | 'Q2_Alternatives'
  | 'Q3_Combination'
  | 'Q4_Temporal'
  | 'Q5_Confirmation'
  | 'Confirmed'
  | 'Aborted';

export type QuoteLine = {
  offeringId: string;
  unitCostCents: number;
  billing: 'PerDay' | 'Once';
  chargedUnits: number;
  lineTotalCents: number;
};

export type Quote = {
  lineItems: QuoteLine[];
  durationDays: number;
  totalCostCents: number;
  currency: string;
  budgetCents?: number | null;
  withinBudget?: boolean | null;
};

export type Proposal = {
  proposalId: string;
  bundle: string[];
  bundleNames: [string, string][];
  quote: Quote;
  rationale: string;
  groundingEvidence: string[];
};

export type Contract = {
  goalText: string;
  location: string | null;
  budgetCents: number | null;
  budgetPeriod: string;
  durationHintDays: number | null;
  sliceProfile: string | null;
  status: string;
  qosConstraints: unknown[];
  policyConstraints: unknown[];
};

export type Findings = {
  hallucinated: string[];
  lowerLayer: string[];
  directOrderAttempts: number;
};

export type OrderItem = {
  offeringId: string;
  offeringName: string;
  tier: string;
  unitCostCents: number;
  billing: string;
  parameters: Record<string, string>;
};

export type OrderDraft = {
  schemaVersion: string;
  orderId: string;
  sessionId: string;
  startDate: string;
  durationDays: number;
  currency: string;
  totalCostCents: number;
  orderItems: OrderItem[];
};

export type SessionDoc = {
  sessionId: string;
  trajectory: string;
  createdAt: string;
  stage: Stage;
  stageHistory: Stage[];
  contract: Contract;
  proposals: Proposal[];
  selected: string[];
  temporal: { startDate: string; durationDays: number } | null;
  orderDraft: OrderDraft | null;
  orderRecordId: number | null;
  findings: Findings;
  budgetWarning: boolean;
  failureCause: string | null;
  abortReason: string | null;
  timings: Record<string, number>;
};

export type Envelope = {
  schemaVersion: string;
  session: SessionDoc;
  reply?: string | null;
  result?: unknown;
};

export type ServerEvent = {
  seq: number;
  type: string;
  sessionId: string;
  timestamp: string;
  data: Record<string, unknown>;
};

export type OrderRecord = {
  schemaVersion: string;
  recordId: number;
  placedAt: string;
  tokenId: string;
  order: OrderDraft;
};
