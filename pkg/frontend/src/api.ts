import { ApiError, JobRecord, Matching, MatchingReply, RegionCard } from './types.js';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function raiseForStatus(response: Response): Promise<Response> {
    if (response.ok) {
        return response;
    }
    let detail = response.statusText;
    try {
        const body = await response.json();
        if (typeof body.detail === 'string') {
            detail = body.detail;
        }
    } catch {
        // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, detail);
}

function assertCards(payload: unknown, endpoint: string): RegionCard[] {
    if (!Array.isArray(payload)) {
        throw new ApiError(0, `schema mismatch from ${endpoint}: expected an array`);
    }
    for (const card of payload) {
        if (typeof card.id !== 'number' || typeof card.area !== 'number'
            || !Array.isArray(card.centroid) || typeof card.overlay_png_url !== 'string') {
            throw new ApiError(0, `schema mismatch from ${endpoint}: bad region card`);
        }
    }
    return payload as RegionCard[];
}

/** Thin typed client over the service endpoints; baseUrl has no trailing slash. */
export class ApiClient {
    constructor(private baseUrl: string, private fetchImpl: FetchLike = fetch) {}

    private async getJson(path: string): Promise<unknown> {
        const response = await raiseForStatus(await this.fetchImpl(this.baseUrl + path));
        return response.json();
    }

    async sceneRegions(): Promise<RegionCard[]> {
        return assertCards(await this.getJson('/api/scene/regions'), '/api/scene/regions');
    }

    async styleRegions(styleIndex: number): Promise<RegionCard[]> {
        const path = `/api/style/${styleIndex}/regions`;
        return assertCards(await this.getJson(path), path);
    }

    async getMatching(styleIndex: number): Promise<MatchingReply> {
        const reply = (await this.getJson(`/api/style/${styleIndex}/matching`)) as MatchingReply;
        if (!reply || typeof reply.matching !== 'object' || !Array.isArray(reply.cost_matrix)) {
            throw new ApiError(0, `schema mismatch from /api/style/${styleIndex}/matching`);
        }
        if (reply.matching.version !== 1) {
            throw new ApiError(0, `unsupported matching version: ${reply.matching.version}`);
        }
        return reply;
    }

    async putMatching(styleIndex: number, matching: Matching): Promise<MatchingReply> {
        const response = await raiseForStatus(
            await this.fetchImpl(`${this.baseUrl}/api/style/${styleIndex}/matching`, {
                method: 'PUT',
                headers: { 'Content-Type': 'application/json' },
                body: JSON.stringify(matching),
            })
        );
        return (await response.json()) as MatchingReply;
    }

    async submitStylize(styleIndex: number, iterations: number): Promise<string> {
        const response = await raiseForStatus(
            await this.fetchImpl(`${this.baseUrl}/api/jobs/stylize`, {
                method: 'POST',
                headers: { 'Content-Type': 'application/json' },
                body: JSON.stringify({ style_index: styleIndex, iterations }),
            })
        );
        const body = (await response.json()) as { job_id: string };
        return body.job_id;
    }

    async getJob(jobId: string): Promise<JobRecord> {
        return (await this.getJson(`/api/jobs/${jobId}`)) as JobRecord;
    }

    /** Cache-busted so a finished job's fresh preview actually loads. */
    renderUrl(styleIndex: number): string {
        return `${this.baseUrl}/api/renders/latest?style=${styleIndex}&t=${Date.now()}`;
    }

    overlayUrl(card: RegionCard): string {
        return this.baseUrl + card.overlay_png_url;
    }
}
