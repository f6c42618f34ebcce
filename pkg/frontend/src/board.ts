import { PairingDraft, saveEnabled } from './pairing.js';
import { JobRecord, RegionCard } from './types.js';
import { WorkspaceState } from './workspace.js';

export interface BoardHandlers {
    onPair: (sceneId: number, styleId: number) => void;
    onSave: () => void;
    onAutoMatch: () => void;
}

const CARD_COLORS = ['#e5484d', '#2f9e44', '#1971c2', '#f08c00', '#9c36b5', '#0c8599'];

function regionColor(id: number): string {
    return CARD_COLORS[id % CARD_COLORS.length];
}

function makeCard(
    doc: Document,
    card: RegionCard,
    side: 'scene' | 'style',
    overlayUrl: string
): HTMLElement {
    const el = doc.createElement('div');
    el.className = `card ${side}-card`;
    el.dataset.regionId = String(card.id);
    el.dataset.side = side;
    el.style.borderLeftColor = regionColor(card.id);

    const img = doc.createElement('img');
    img.src = overlayUrl;
    img.alt = `${side} region ${card.id}`;
    el.appendChild(img);

    const label = doc.createElement('div');
    label.className = 'card-label';
    label.textContent = `${side} ${card.id}`;
    el.appendChild(label);

    const stats = doc.createElement('div');
    stats.className = 'card-stats';
    stats.textContent =
        `area ${(card.area * 100).toFixed(1)}%` +
        ` · centroid ${card.centroid[0].toFixed(2)}, ${card.centroid[1].toFixed(2)}`;
    el.appendChild(stats);
    return el;
}

function pairingLines(doc: Document, draft: PairingDraft): SVGElement {
    // Cards are laid out top-aligned at fixed pitch; lines share that
    // coordinate system instead of measuring the DOM, which keeps this
    // renderable headlessly.
    const svg = doc.createElementNS('http://www.w3.org/2000/svg', 'svg');
    svg.setAttribute('class', 'pairing-lines');
    svg.setAttribute('viewBox', '0 0 100 1000');
    svg.setAttribute('preserveAspectRatio', 'none');
    for (const scene of [...draft.pairs.keys()].sort((a, b) => a - b)) {
        const style = draft.pairs.get(scene)!;
        const line = doc.createElementNS('http://www.w3.org/2000/svg', 'line');
        line.setAttribute('x1', '0');
        line.setAttribute('y1', String(scene * 120 + 55));
        line.setAttribute('x2', '100');
        line.setAttribute('y2', String(style * 120 + 55));
        line.setAttribute('stroke', regionColor(scene));
        line.setAttribute('stroke-width', '2');
        line.dataset.pair = `${scene}->${style}`;
        svg.appendChild(line);
    }
    return svg;
}

/** Rebuild the two-column board inside root. */
export function renderBoard(
    doc: Document,
    root: HTMLElement,
    state: WorkspaceState,
    overlayUrl: (card: RegionCard) => string,
    handlers: BoardHandlers
): void {
    root.textContent = '';

    const counts = doc.createElement('div');
    counts.className = 'board-counts';
    counts.textContent =
        `${state.sceneCards.length} scene regions · ${state.styleCards.length} style ` +
        `regions · ${state.draft.pairs.size} pairs · mode ${state.draft.mode}`;
    root.appendChild(counts);

    const board = doc.createElement('div');
    board.className = 'board';

    const sceneCol = doc.createElement('div');
    sceneCol.className = 'column scene-column';
    for (const card of state.sceneCards) {
        const el = makeCard(doc, card, 'scene', overlayUrl(card));
        const select = doc.createElement('select');
        select.className = 'pair-select';
        for (const target of state.styleCards) {
            const option = doc.createElement('option');
            option.value = String(target.id);
            option.textContent = `style ${target.id}`;
            if (state.draft.pairs.get(card.id) === target.id) {
                option.selected = true;
            }
            select.appendChild(option);
        }
        select.addEventListener('change', () => {
            handlers.onPair(card.id, Number(select.value));
        });
        el.appendChild(select);
        sceneCol.appendChild(el);
    }

    const styleCol = doc.createElement('div');
    styleCol.className = 'column style-column';
    for (const card of state.styleCards) {
        styleCol.appendChild(makeCard(doc, card, 'style', overlayUrl(card)));
    }

    board.appendChild(sceneCol);
    board.appendChild(pairingLines(doc, state.draft));
    board.appendChild(styleCol);
    root.appendChild(board);

    const actions = doc.createElement('div');
    actions.className = 'board-actions';
    const save = doc.createElement('button');
    save.className = 'save-button';
    save.textContent = 'Save matching';
    save.disabled = !saveEnabled(state.draft);
    save.addEventListener('click', handlers.onSave);
    actions.appendChild(save);

    const auto = doc.createElement('button');
    auto.className = 'auto-match-button';
    auto.textContent = 'Auto-match';
    auto.disabled = state.draft.pairs.size > 0 && !state.draft.dirty;
    auto.addEventListener('click', handlers.onAutoMatch);
    actions.appendChild(auto);
    root.appendChild(actions);

    root.appendChild(renderMessages(doc, state.draft));
}

export function renderMessages(doc: Document, draft: PairingDraft): HTMLElement {
    const box = doc.createElement('div');
    box.className = 'messages';
    for (const text of draft.errors) {
        const row = doc.createElement('div');
        row.className = 'message error';
        row.textContent = text;
        box.appendChild(row);
    }
    for (const text of draft.warnings) {
        const row = doc.createElement('div');
        row.className = 'message warning';
        row.textContent = text;
        box.appendChild(row);
    }
    return box;
}

/** Append one chip per state transition, preserving arrival order. */
export function renderJobTransition(doc: Document, container: HTMLElement, record: JobRecord): void {
    const chip = doc.createElement('span');
    chip.className = `job-state job-${record.state}`;
    chip.textContent = record.state;
    container.appendChild(chip);
    if (record.state === 'failed' && record.error) {
        const err = doc.createElement('div');
        err.className = 'message error';
        err.textContent = record.error;
        container.appendChild(err);
    }
}

export interface ComparisonState {
    latestUrl: string;
    latestLoadedAt: number;
    pinnedUrl: string | null;
    pinnedLabel: string | null;
}

/** Latest render next to the pinned previous one, with a staleness badge. */
export function renderComparison(
    doc: Document,
    container: HTMLElement,
    comparison: ComparisonState,
    now: number = Date.now()
): void {
    container.textContent = '';
    const latest = doc.createElement('figure');
    latest.className = 'render latest';
    const img = doc.createElement('img');
    img.src = comparison.latestUrl;
    img.alt = 'latest render';
    latest.appendChild(img);
    const caption = doc.createElement('figcaption');
    const ageSeconds = Math.max(0, Math.round((now - comparison.latestLoadedAt) / 1000));
    caption.textContent = 'latest';
    if (ageSeconds > 60) {
        const badge = doc.createElement('span');
        badge.className = 'stale-badge';
        badge.textContent = `${Math.round(ageSeconds / 60)} min old`;
        caption.appendChild(badge);
    }
    latest.appendChild(caption);
    container.appendChild(latest);

    if (comparison.pinnedUrl !== null) {
        const pinned = doc.createElement('figure');
        pinned.className = 'render pinned';
        const prev = doc.createElement('img');
        prev.src = comparison.pinnedUrl;
        prev.alt = 'previous render';
        pinned.appendChild(prev);
        const prevCaption = doc.createElement('figcaption');
        prevCaption.textContent = comparison.pinnedLabel ?? 'previous';
        pinned.appendChild(prevCaption);
        container.appendChild(pinned);
    }
}

/** Full-width banner; retry shows a button wired to the callback. */
export function renderBanner(
    doc: Document,
    container: HTMLElement,
    text: string,
    onRetry: (() => void) | null
): void {
    container.textContent = '';
    const banner = doc.createElement('div');
    banner.className = 'banner';
    banner.textContent = text;
    if (onRetry !== null) {
        const retry = doc.createElement('button');
        retry.className = 'retry-button';
        retry.textContent = 'Retry';
        retry.addEventListener('click', onRetry);
        banner.appendChild(retry);
    }
    container.appendChild(banner);
}
