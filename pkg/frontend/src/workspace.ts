import { ApiClient } from './api.js';
import { PairingDraft, draftFromMatching } from './pairing.js';
import { Matching, RegionCard } from './types.js';

export interface WorkspaceState {
    sceneCards: RegionCard[];
    styleCards: RegionCard[];
    styleIndex: number;
    /** Matching as the server returned it; the conflict baseline. */
    baseline: Matching;
    costMatrix: number[][];
    draft: PairingDraft;
    renderUrl: string;
    loadedAt: number;
}

/** Fetch everything the board needs for one style. */
export async function loadWorkspace(client: ApiClient, styleIndex: number): Promise<WorkspaceState> {
    const sceneCards = await client.sceneRegions();
    const styleCards = await client.styleRegions(styleIndex);
    const reply = await client.getMatching(styleIndex);
    return {
        sceneCards,
        styleCards,
        styleIndex,
        baseline: reply.matching,
        costMatrix: reply.cost_matrix,
        draft: draftFromMatching(reply.matching),
        renderUrl: client.renderUrl(styleIndex),
        loadedAt: Date.now(),
    };
}
