"""Multi-turn training records with loss masks."""
from __future__ import annotations

from .session import EMBEDDINGS_PER_CHUNK
from .trajectory import Trajectory

USER_TOK, ASSISTANT_TOK, EOT_TOK, SPEECH_TOK = "<user>", "<assistant>", "<eot>", "<speech>"
DEFAULT_PROMPT = "Translate the following speech from English to Chinese ."


def emit_training_records(traj: Trajectory, instruction: str = DEFAULT_PROMPT) -> dict:
    """Serialize a trajectory as instruction + alternating USER/ASSISTANT turns.

    The loss mask is 1 on translation tokens and on the EOT closing each
    ASSISTANT turn, 0 everywhere else.
    """
    tokens = instruction.split()
    mask = [0] * len(tokens)
    chunks = []
    for step in traj.steps:
        user = [USER_TOK] + [SPEECH_TOK] * (EMBEDDINGS_PER_CHUNK * step.n_chunks) + [EOT_TOK, ASSISTANT_TOK]
        tokens += user
        mask += [0] * len(user)
        tokens += list(step.tokens) + [EOT_TOK]
        mask += [1] * (len(step.tokens) + 1)
        chunks.append([step.chunk_start, step.chunk_end])
    return {"tokens": tokens, "loss_mask": mask, "speech_chunks": chunks}
