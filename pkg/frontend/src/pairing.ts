import { Matching, serializeMatching } from './types.js';

export interface PairingDraft {
    pairs: Map<number, number>;
    mode: string;
    numSceneRegions: number;
    numStyleRegions: number;
    dirty: boolean;
    /** Blocking problems; save stays disabled while any exist. */
    errors: string[];
    /** Non-blocking notices (custom-mode duplicates, swap gestures). */
    warnings: string[];
}

export function draftFromMatching(matching: Matching): PairingDraft {
    const pairs = new Map<number, number>();
    for (const [key, value] of Object.entries(matching.assignment)) {
        pairs.set(Number(key), value);
    }
    const draft: PairingDraft = {
        pairs,
        mode: matching.mode,
        numSceneRegions: matching.num_scene_regions,
        numStyleRegions: matching.num_style_regions,
        dirty: false,
        errors: [],
        warnings: [],
    };
    validateDraft(draft);
    return draft;
}

export function draftToMatching(draft: PairingDraft): Matching {
    const assignment: Record<string, number> = {};
    for (const scene of [...draft.pairs.keys()].sort((a, b) => a - b)) {
        assignment[String(scene)] = draft.pairs.get(scene)!;
    }
    return {
        version: 1,
        mode: draft.mode,
        num_scene_regions: draft.numSceneRegions,
        num_style_regions: draft.numStyleRegions,
        assignment,
    };
}

function duplicates(draft: PairingDraft): Map<number, number[]> {
    const byStyle = new Map<number, number[]>();
    for (const scene of [...draft.pairs.keys()].sort((a, b) => a - b)) {
        const style = draft.pairs.get(scene)!;
        byStyle.set(style, [...(byStyle.get(style) ?? []), scene]);
    }
    return new Map([...byStyle].filter(([, scenes]) => scenes.length > 1));
}

/** Recompute errors/warnings; mirrors every server rule for the active
    mode (completeness, ranges, injectivity) so anything the server would
    reject never becomes saveable, plus advisory duplicate warnings the
    server does not issue. */
export function validateDraft(draft: PairingDraft): void {
    const errors: string[] = [];
    const warnings: string[] = [];
    for (let scene = 0; scene < draft.numSceneRegions; scene++) {
        if (!draft.pairs.has(scene)) {
            errors.push(`scene region ${scene} is unpaired`);
        }
    }
    for (const [scene, style] of draft.pairs) {
        if (scene < 0 || scene >= draft.numSceneRegions) {
            errors.push(`unknown scene region ${scene}`);
        }
        if (style < 0 || style >= draft.numStyleRegions) {
            errors.push(`scene region ${scene} targets unknown style region ${style}`);
        }
    }
    for (const [style, scenes] of duplicates(draft)) {
        const pair = `style region ${style} is shared by scene regions ${scenes.join(' and ')}`;
        if (draft.mode === 'injective') {
            errors.push(pair);
        } else {
            warnings.push(pair);
        }
    }
    if (draft.mode === 'surjective') {
        const used = new Set(draft.pairs.values());
        for (let style = 0; style < draft.numStyleRegions; style++) {
            if (!used.has(style)) {
                errors.push(`style region ${style} is unused`);
            }
        }
    }
    draft.errors = errors;
    draft.warnings = warnings;
}

export function saveEnabled(draft: PairingDraft): boolean {
    return draft.dirty && draft.errors.length === 0;
}

/** Reassign one scene region.

    In injective mode, dropping onto an occupied style region swaps the
    two assignments instead of duplicating. Unknown ids leave the draft
    untouched apart from a warning. */
export function editPairing(draft: PairingDraft, sceneId: number, styleId: number): PairingDraft {
    if (sceneId < 0 || sceneId >= draft.numSceneRegions || !draft.pairs.has(sceneId)) {
        draft.warnings = [`unknown scene region ${sceneId}; pairing unchanged`];
        return draft;
    }
    if (styleId < 0 || styleId >= draft.numStyleRegions) {
        draft.warnings = [`unknown style region ${styleId}; pairing unchanged`];
        return draft;
    }
    const previous = draft.pairs.get(sceneId)!;
    if (previous === styleId) {
        return draft;
    }
    if (draft.mode === 'injective') {
        for (const [other, style] of draft.pairs) {
            if (style === styleId && other !== sceneId) {
                draft.pairs.set(other, previous);
                break;
            }
        }
    }
    draft.pairs.set(sceneId, styleId);
    draft.dirty = true;
    validateDraft(draft);
    return draft;
}

/** True when the server's matching no longer equals the one the draft
    was loaded from; saving over it would drop someone else's edit. */
export function baselineConflict(baseline: Matching, current: Matching): boolean {
    return serializeMatching(baseline) !== serializeMatching(current);
}
