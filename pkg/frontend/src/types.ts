/** Shapes exchanged with the pipeline service. */

export interface RegionCard {
    id: number;
    area: number;
    centroid: [number, number];
    overlay_png_url: string;
}

export interface Matching {
    version: number;
    mode: string;
    num_scene_regions: number;
    num_style_regions: number;
    assignment: Record<string, number>;
    cost?: number;
}

export interface MatchingReply {
    matching: Matching;
    cost_matrix: number[][];
}

export interface JobRecord {
    id: string;
    kind: string;
    style_index: number;
    iterations: number;
    state: 'queued' | 'running' | 'done' | 'failed';
    created_at: number;
    started_at: number | null;
    finished_at: number | null;
    error: string | null;
}

export class ApiError extends Error {
    constructor(public status: number, public detail: string) {
        super(`${status}: ${detail}`);
    }
}

/** Serialize a matching with stable field and key order.

    The round-trip guarantee (load, edit, save, reload reproduces the
    pairs byte-equal) is checked against this canonical form; the cost
    field is the server's output and excluded. */
export function serializeMatching(matching: Matching): string {
    const assignment: Record<string, number> = {};
    for (const key of Object.keys(matching.assignment)
        .map(Number)
        .sort((a, b) => a - b)) {
        assignment[String(key)] = matching.assignment[String(key)];
    }
    return JSON.stringify({
        version: matching.version,
        mode: matching.mode,
        num_scene_regions: matching.num_scene_regions,
        num_style_regions: matching.num_style_regions,
        assignment,
    });
}
