import { ApiError, CocreationApi } from './api.js';
import type { Action } from './api.js';
import { subscribeEvents } from './sse.js';
import type { StreamHandle } from './sse.js';
import {
  STAGE_LADDER,
  applyEnvelope,
  applyServerEvent,
  budgetRatio,
  canConfirm,
  formatEuros,
  initialState,
  isTerminal,
  ladderStatus,
  pushUserText,
} from './state.js';
import type { ViewState } from './state.js';
import type { ServerEvent } from './types.js';

export type MountOptions = {
  /** Injectable for tests; defaults to the fetch-based stream reader. */
  subscribe?: (url: string, onEvent: (event: ServerEvent) => void) => StreamHandle;
};

export type AppHandle = {
  state: () => ViewState;
  open: (intentText: string, defaultParameters?: Record<string, string>) => Promise<void>;
  /**
   * Send one action to the server. Deliberately does not mirror the client
   * guards: the server is authoritative and its 409s render inline, which is
   * exactly what a hand-forged POST would produce.
   */
  dispatch: (action: Action) => Promise<void>;
  streamDone: () => Promise<void> | null;
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

export function mountApp(
  root: HTMLElement,
  api: CocreationApi,
  options: MountOptions = {},
): AppHandle {
  let state = initialState();
  let stream: StreamHandle | null = null;
  let streamDone: Promise<void> | null = null;
  const subscribe =
    options.subscribe ?? ((url, onEvent) => subscribeEvents(url, onEvent));

  root.innerHTML = '';
  const header = el('header');
  const stageBadge = el('span', { class: 'badge', 'data-testid': 'stage-badge' }, 'no session');
  const connBadge = el('span', { class: 'conn', 'data-testid': 'connection' }, 'idle');
  header.append(el('h1', {}, 'Service co-creation'), stageBadge, connBadge);

  const banners = el('div', { class: 'banners', 'data-testid': 'banners' });
  const inlineError = el('div', { class: 'inline-error hidden', 'data-testid': 'inline-error' });

  const transcript = el('div', { class: 'transcript', 'data-testid': 'transcript' });
  const composer = el('div', { class: 'composer' });
  const intentInput = el('textarea', {
    'data-testid': 'intent-input',
    placeholder: 'Describe the service you need, including budget and duration',
  });
  const openButton = el('button', { 'data-testid': 'open-session' }, 'Start co-creation');
  composer.append(intentInput, openButton);

  const controls = el('div', { class: 'controls', 'data-testid': 'controls' });
  const proposals = el('div', { class: 'proposals', 'data-testid': 'proposals' });
  const budgetBar = el('div', { class: 'budget hidden', 'data-testid': 'budget-bar' });
  const draftPreview = el('div', { class: 'draft hidden', 'data-testid': 'draft-preview' });
  const placedPanel = el('div', { class: 'placed hidden', 'data-testid': 'placed-order' });
  const ladder = el('ol', { class: 'ladder', 'data-testid': 'ladder' });
  const timeline = el('ol', { class: 'timeline', 'data-testid': 'timeline' });

  const modal = el('div', { class: 'modal hidden', 'data-testid': 'confirm-modal' });

  const main = el('main');
  const left = el('section', { class: 'col' });
  left.append(transcript, inlineError, composer, controls, proposals, budgetBar, draftPreview, placedPanel);
  const right = el('aside', { class: 'col side' });
  right.append(
    el('h2', {}, 'Stages'), ladder,
    el('h2', {}, 'Timeline'), timeline,
  );
  main.append(left, right);
  root.append(header, banners, main, modal);

  function setState(next: ViewState): void {
    state = next;
    render();
  }

  function onEvent(event: ServerEvent): void {
    setState(applyServerEvent(state, event));
  }

  async function open(
    intentText: string,
    defaultParameters?: Record<string, string>,
  ): Promise<void> {
    setState({ ...pushUserText(state, intentText), busy: true, inlineError: null });
    try {
      const envelope = await api.openSession(intentText, defaultParameters);
      setState({ ...applyEnvelope(state, envelope), busy: false, connection: 'live' });
      stream = subscribe(api.eventsUrl(envelope.session.sessionId), onEvent);
      streamDone = stream.done
        .then(() => {
          setState({ ...state, connection: isTerminal(state) ? 'idle' : 'lost' });
        })
        .catch(() => {
          setState({ ...state, connection: 'lost' });
        });
    } catch (err) {
      setState({ ...state, busy: false, inlineError: describe(err), connection: 'idle' });
    }
  }

  async function dispatch(action: Action): Promise<void> {
    if (!state.sessionId) return;
    let next: ViewState = { ...state, busy: true, inlineError: null };
    if (action.action === 'temporal' && action.startDate) {
      next = pushUserText(next, `Start ${action.startDate} for ${action.durationDays} days`);
    } else if (action.action === 'confirm') {
      next = pushUserText(next, action.confirmation);
    } else if ('text' in action && action.text) {
      next = pushUserText(next, action.text);
    }
    setState(next);
    try {
      const envelope = await api.act(state.sessionId, action);
      setState({ ...applyEnvelope(state, envelope), busy: false });
    } catch (err) {
      setState({ ...state, busy: false, inlineError: describe(err) });
    }
  }

  function describe(err: unknown): string {
    if (err instanceof ApiError) return `${err.status} ${err.type}: ${err.message}`;
    return err instanceof Error ? err.message : String(err);
  }

  // -- rendering ------------------------------------------------------------

  function render(): void {
    stageBadge.textContent = state.stage ?? 'no session';
    stageBadge.className = `badge stage-${state.stage ?? 'none'}`;
    connBadge.textContent = state.connection;

    renderBanners();
    renderTranscript();
    renderControls();
    renderProposals();
    renderBudget();
    renderDraft();
    renderPlaced();
    renderLadder();
    renderTimeline();
    renderModal();

    inlineError.textContent = state.inlineError ?? '';
    inlineError.classList.toggle('hidden', state.inlineError === null);
    composer.classList.toggle('hidden', state.sessionId !== null);
  }

  function renderBanners(): void {
    banners.innerHTML = '';
    for (const name of state.findings.hallucinated) {
      banners.append(el('div', { class: 'banner warn' },
        `Unverifiable product claimed by the agent: "${name}"`));
    }
    for (const name of state.findings.lowerLayer) {
      banners.append(el('div', { class: 'banner info' },
        `Lower-layer detail surfaced: "${name}"`));
    }
    if (state.findings.directOrderAttempts > 0) {
      banners.append(el('div', { class: 'banner warn' },
        `Blocked ${state.findings.directOrderAttempts} early order attempt(s)`));
    }
    if (state.budgetWarning) {
      banners.append(el('div', { class: 'banner warn' }, 'Quote exceeds the stated budget'));
    }
  }

  function renderTranscript(): void {
    transcript.innerHTML = '';
    for (const entry of state.transcript) {
      const bubble = el('div', { class: `turn ${entry.role}` });
      bubble.append(el('p', {}, entry.text));
      if (entry.modelStatedCost) {
        bubble.classList.add('model-stated');
        bubble.append(el('span', { class: 'tag' }, 'model-stated figure; engine quote governs'));
      }
      transcript.append(bubble);
    }
  }

  function renderControls(): void {
    controls.innerHTML = '';
    if (!state.sessionId || isTerminal(state)) return;

    if (state.stage === 'Q1_Ingestion') {
      const ground = el('button', { 'data-testid': 'ground' }, 'Ground my request');
      ground.disabled = state.busy;
      ground.onclick = () => void dispatch({ action: 'ground' });
      controls.append(ground);
    }
    if (state.stage === 'Q2_Alternatives' && state.proposals.length === 0) {
      const propose = el('button', { 'data-testid': 'request-proposals' }, 'Show me alternatives');
      propose.disabled = state.busy;
      propose.onclick = () =>
        void dispatch({ action: 'propose', text: 'Which combinations would cover this?' });
      controls.append(propose);
    }
    if (state.stage === 'Q4_Temporal') {
      const date = el('input', { type: 'date', 'data-testid': 'start-date' });
      const days = el('input', {
        type: 'number', min: '1', value: '7', 'data-testid': 'duration-days',
      });
      const set = el('button', { 'data-testid': 'set-schedule' }, 'Set schedule');
      set.disabled = state.busy;
      set.onclick = () => {
        if (!date.value) return;
        void dispatch({
          action: 'temporal',
          startDate: date.value,
          durationDays: Number(days.value || '1'),
        });
      };
      controls.append(date, days, set);
    }
    if (state.stage === 'Q5_Confirmation' && !state.draft) {
      const draft = el('button', { 'data-testid': 'build-draft' }, 'Prepare the order');
      draft.disabled = state.busy;
      draft.onclick = () => void dispatch({ action: 'draft' });
      controls.append(draft);
    }

    const confirmOpen = el('button', { 'data-testid': 'confirm-open', class: 'primary' },
      'Place order…');
    confirmOpen.disabled = !canConfirm(state) || state.busy;
    confirmOpen.onclick = () => setState({ ...state, confirmModalOpen: true });
    const abort = el('button', { 'data-testid': 'abort', class: 'danger' }, 'Abort');
    abort.disabled = state.busy;
    abort.onclick = () => void dispatch({ action: 'abort', reason: 'user cancelled' });
    controls.append(confirmOpen, abort);
  }

  function renderProposals(): void {
    proposals.innerHTML = '';
    state.proposals.forEach((proposal, index) => {
      const card = el('div', { class: 'proposal-card' });
      card.append(el('h3', {}, `Alternative ${index + 1}`));
      const list = el('ul');
      proposal.bundleNames.forEach(([name, tier], itemIndex) => {
        const offeringId = proposal.bundle[itemIndex];
        const line = proposal.quote.lineItems.find((li) => li.offeringId === offeringId);
        const cost = line
          ? ` - ${formatEuros(line.unitCostCents)}${line.billing === 'PerDay' ? '/day' : ' once'}`
          : '';
        list.append(el('li', {}, `${name} (${tier})${cost}`));
      });
      card.append(list);
      card.append(el('p', { class: 'quote' },
        `${formatEuros(proposal.quote.totalCostCents)} for ${proposal.quote.durationDays} day(s)`));
      card.append(el('p', { class: 'rationale' }, proposal.rationale));
      const pick = el('button', { 'data-testid': `select-${index}` }, 'Select this combination');
      pick.disabled = state.busy || state.stage !== 'Q2_Alternatives';
      pick.onclick = () => void dispatch({ action: 'select', index });
      card.append(pick);
      proposals.append(card);
    });
  }

  function renderBudget(): void {
    const ratio = budgetRatio(state);
    budgetBar.innerHTML = '';
    if (ratio.percent === null || ratio.quoteCents === null || ratio.budgetCents === null) {
      budgetBar.classList.add('hidden');
      return;
    }
    budgetBar.classList.remove('hidden');
    budgetBar.classList.toggle('over', ratio.over);
    const track = el('div', { class: 'track' });
    const fill = el('div', { class: 'fill' });
    fill.style.width = `${ratio.percent}%`;
    track.append(fill);
    budgetBar.append(
      el('span', {}, `Engine quote ${formatEuros(ratio.quoteCents)} of ${formatEuros(ratio.budgetCents)} budget`),
      track,
    );
  }

  function renderDraft(): void {
    draftPreview.innerHTML = '';
    if (!state.draft) {
      draftPreview.classList.add('hidden');
      return;
    }
    draftPreview.classList.remove('hidden');
    draftPreview.append(el('h3', {}, 'Order draft'));
    const list = el('ul');
    for (const item of state.draft.orderItems) {
      list.append(el('li', {},
        `${item.offeringName} (${item.tier}) - ${formatEuros(item.unitCostCents)} ${item.billing}`));
    }
    draftPreview.append(
      list,
      el('p', {}, `Starts ${state.draft.startDate}, runs ${state.draft.durationDays} day(s)`),
      el('p', { class: 'total' }, `Total ${formatEuros(state.draft.totalCostCents)}`),
    );
  }

  function renderPlaced(): void {
    placedPanel.innerHTML = '';
    if (!state.placedOrder) {
      placedPanel.classList.add('hidden');
      return;
    }
    placedPanel.classList.remove('hidden');
    placedPanel.append(
      el('h3', {}, 'Order placed'),
      el('p', {}, `Order ${state.placedOrder.orderId}`),
    );
    if (state.placedOrder.totalCostCents !== null) {
      placedPanel.append(el('p', {}, `Total ${formatEuros(state.placedOrder.totalCostCents)}`));
    }
  }

  function renderLadder(): void {
    ladder.innerHTML = '';
    for (const step of STAGE_LADDER) {
      ladder.append(el('li', { class: ladderStatus(state, step.stage) }, step.label));
    }
  }

  function renderTimeline(): void {
    timeline.innerHTML = '';
    for (const event of state.timeline) {
      timeline.append(el('li', { class: `event-${event.type}` },
        `#${event.seq} ${event.type}`));
    }
  }

  function renderModal(): void {
    modal.innerHTML = '';
    modal.classList.toggle('hidden', !state.confirmModalOpen);
    if (!state.confirmModalOpen) return;
    const box = el('div', { class: 'modal-box' });
    box.append(
      el('h3', {}, 'Confirm this order?'),
      el('p', {}, state.draft
        ? `You are about to place an order for ${formatEuros(state.draft.totalCostCents)}.`
        : 'No draft available.'),
    );
    const go = el('button', { 'data-testid': 'confirm-go', class: 'primary' }, 'Yes, place the order');
    go.onclick = () => {
      setState({ ...state, confirmModalOpen: false });
      void dispatch({ action: 'confirm', confirmation: 'yes' });
    };
    const cancel = el('button', { 'data-testid': 'confirm-cancel' }, 'Keep editing');
    cancel.onclick = () => setState({ ...state, confirmModalOpen: false });
    box.append(go, cancel);
    modal.append(box);
  }

  openButton.onclick = () => {
    const text = intentInput.value.trim();
    if (text) void open(text);
  };

  render();
  return {
    state: () => state,
    open,
    dispatch,
    streamDone: () => streamDone,
  };
}
