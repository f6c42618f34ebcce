import { ApiClient } from './api.js';
import {
    BoardHandlers,
    ComparisonState,
    renderBanner,
    renderBoard,
    renderComparison,
    renderJobTransition,
} from './board.js';
import { pollJob } from './jobs.js';
import { baselineConflict, draftToMatching, editPairing, saveEnabled } from './pairing.js';
import { ApiError } from './types.js';
import { WorkspaceState, loadWorkspace } from './workspace.js';

const POLL_INTERVAL_MS = 2000;

class EditorApp {
    private client: ApiClient;
    private state: WorkspaceState | null = null;
    private comparison: ComparisonState | null = null;
    private jobRunning = false;

    constructor(private doc: Document, serverUrl: string) {
        this.client = new ApiClient(serverUrl);
    }

    private el(id: string): HTMLElement {
        const found = this.doc.getElementById(id);
        if (!found) {
            throw new Error(`missing #${id}`);
        }
        return found;
    }

    async start(): Promise<void> {
        const picker = this.el('style-picker') as HTMLSelectElement;
        picker.addEventListener('change', () => {
            void this.load(Number(picker.value));
        });
        await this.load(Number(picker.value || 0));
    }

    private async load(styleIndex: number): Promise<void> {
        try {
            this.state = await loadWorkspace(this.client, styleIndex);
            this.el('banner-area').textContent = '';
        } catch (error) {
            const detail = error instanceof Error ? error.message : String(error);
            const schema = error instanceof ApiError && error.status === 0;
            renderBanner(
                this.doc,
                this.el('banner-area'),
                schema ? detail : `service unreachable: ${detail}`,
                schema ? null : () => void this.load(styleIndex)
            );
            return;
        }
        this.comparison = {
            latestUrl: this.state.renderUrl,
            latestLoadedAt: this.state.loadedAt,
            pinnedUrl: this.comparison?.latestUrl ?? null,
            pinnedLabel: this.comparison ? 'previous' : null,
        };
        this.redraw();
    }

    private redraw(): void {
        if (!this.state) {
            return;
        }
        const handlers: BoardHandlers = {
            onPair: (sceneId, styleId) => {
                editPairing(this.state!.draft, sceneId, styleId);
                this.redraw();
            },
            onSave: () => void this.saveAndStylize(),
            onAutoMatch: () => void this.load(this.state!.styleIndex),
        };
        renderBoard(
            this.doc,
            this.el('board-area'),
            this.state,
            (card) => this.client.overlayUrl(card),
            handlers
        );
        if (this.comparison) {
            renderComparison(this.doc, this.el('render-area'), this.comparison);
        }
    }

    /** PUT the draft, queue one job for this style, and track it. */
    private async saveAndStylize(): Promise<void> {
        if (!this.state || !saveEnabled(this.state.draft)) {
            return;
        }
        if (this.jobRunning) {
            renderBanner(this.doc, this.el('banner-area'),
                'a stylization job is already running', null);
            return;
        }
        const styleIndex = this.state.styleIndex;
        try {
            const current = await this.client.getMatching(styleIndex);
            if (baselineConflict(this.state.baseline, current.matching)) {
                renderBanner(this.doc, this.el('banner-area'),
                    'matching changed on the server since load; reload before saving',
                    () => void this.load(styleIndex));
                return;
            }
            const saved = await this.client.putMatching(
                styleIndex, draftToMatching(this.state.draft));
            this.state.baseline = saved.matching;
            this.state.draft.dirty = false;
            this.redraw();

            const iterations = Number(
                (this.el('iterations') as HTMLInputElement).value || '64');
            const jobId = await this.client.submitStylize(styleIndex, iterations);
            const jobArea = this.el('job-area');
            jobArea.textContent = '';
            this.jobRunning = true;
            const record = await pollJob(this.client, jobId, {
                intervalMs: POLL_INTERVAL_MS,
                onTransition: (r) => renderJobTransition(this.doc, jobArea, r),
            });
            this.jobRunning = false;
            if (record.state === 'done' && this.comparison) {
                this.comparison = {
                    latestUrl: this.client.renderUrl(styleIndex),
                    latestLoadedAt: Date.now(),
                    pinnedUrl: this.comparison.latestUrl,
                    pinnedLabel: 'before this job',
                };
                this.redraw();
            }
        } catch (error) {
            this.jobRunning = false;
            const detail = error instanceof Error ? error.message : String(error);
            renderBanner(this.doc, this.el('banner-area'), detail,
                () => void this.load(styleIndex));
        }
    }
}

export function bootstrap(doc: Document, serverUrl: string): EditorApp {
    return new EditorApp(doc, serverUrl);
}

declare global {
    interface Window {
        __editor?: EditorApp;
    }
}

if (typeof window !== 'undefined' && typeof document !== 'undefined'
    && document.getElementById('board-area')) {
    const app = bootstrap(document, window.location.origin);
    window.__editor = app;
    void app.start();
}
