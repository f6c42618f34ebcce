import { ApiClient } from './api.js';
import { JobRecord } from './types.js';

export interface PollOptions {
    intervalMs?: number;
    /** Called once per distinct state, in the order observed. */
    onTransition?: (record: JobRecord) => void;
    timeoutMs?: number;
}

function sleep(ms: number): Promise<void> {
    return new Promise((resolve) => setTimeout(resolve, ms));
}

/** Poll a job to a terminal state, reporting each transition once.

    Resolves with the final record for both done and failed jobs; the
    caller reads record.error for failures. Rejects only on timeout or
    transport errors. */
export async function pollJob(
    client: ApiClient,
    jobId: string,
    options: PollOptions = {}
): Promise<JobRecord> {
    const interval = options.intervalMs ?? 2000;
    const deadline = Date.now() + (options.timeoutMs ?? 30 * 60 * 1000);
    let lastState: string | null = null;
    for (;;) {
        const record = await client.getJob(jobId);
        if (record.state !== lastState) {
            lastState = record.state;
            options.onTransition?.(record);
        }
        if (record.state === 'done' || record.state === 'failed') {
            return record;
        }
        if (Date.now() > deadline) {
            throw new Error(`job ${jobId} still ${record.state} at timeout`);
        }
        await sleep(interval);
    }
}
