"""Prompt templates and rendering.

The templates are load-bearing: memory formation, retrieval, answering,
and judging are all specified by this exact wording, so the text below
is preserved byte-for-byte, including its quirks ("add_trivas",
"indice", "beased on the relevance", the skipped instruction number).
Do not reword casually; behavior follows the words.

Rendering substitutes only the declared placeholders for a template, in
a single pass, so brace characters inside substituted values (or in the
template itself, like the consolidation return-format example) are left
alone.
"""

from __future__ import annotations

import hashlib
import re
from enum import Enum
from typing import Mapping

from .errors import MissingBinding


class PromptKind(str, Enum):
    STORY_INIT = "story_init"
    MEMORY_BINDING = "memory_binding"
    CONSOLIDATION = "consolidation"
    SEMANTICIZATION = "semanticization"
    COHERENCE_RETRIEVE = "coherence_retrieve"
    GRAPH_QUERY_TRANSLATE = "graph_query_translate"
    ANSWER = "answer"
    JUDGE = "judge"


# When a story has no substories yet, the templates fill the slot with a
# fixed phrase (the original conditional defaults).
NO_SUBSTORIES_CONSOLIDATION = "None yet."
NO_SUBSTORIES_SEMANTICIZATION = "None."


STORY_INIT_TEMPLATE = """You are given a multi-turn, multi-date conversation between two people. The conversation may include topic switches, story developments, or new ideas being introduced over time.

Your task is to extract and organize the conversation into a list of story threads, where each story:

 * Belongs to one main owner (the story owner).
 * Has a distinct topic or subject.
 * Evolves chronologically with unfolding related messages.

 For each story, return a Python dictionary with:

 * `"owner"`: the speaker of the story.
 * `"topic"`: a title for the story.
 * `"content"`: a copy of the message, including the timestamp, speaker, and utterance.

Very Important:

If a new message connects logically and chronologically to an existing story, expand that story in the content tuple. Treat them as separate stories only if they belong to different domains.

The conversation:
{conv}

Output format: return the Python list of dictionaries."""


MEMORY_BINDING_TEMPLATE = """You are given:

1. A list of existing stories, each with:
 - "owner": the speaker of the story.
 - "topic": a title for the story

2. A short context window of recent dialogue turns
3. A new turn

Your task:

Use the **recent dialogue context** only to better understand the **new turn**. Then, for this new message(s) (only when it contains factual information, see below), decide:
Whether it logically and thematically extends an existing story, OR
Whether it introduces a new story in which, propose a new owner and a topic for it.

If the new message belongs to a new domain, create a new story instead.

Input:

Existing stories:
{headlines}

Recent dialogue context:
{recent_context}

New conversation turn:
{new_conv}

Output format: a list of routing decisions.
Each decision should be a Python dictionary with:
 * "message_excerpt": a copy of the message, including the timestamp, speaker, and utterance.
 * "action": one of:
     - "extend_story"
     - "create_new_story"
 * If "extend_story": include "topic" and "owner"
 * If "create_new_story": include a proposed "topic" and "owner"

Return **only** the list of routing decisions. No explanation or verbose."""


CONSOLIDATION_TEMPLATE = """You are analyzing the structure of a story composed of memory items.

The current **main topic** of the story is:
    "{main_topic}"

Here are the **existing substories**:
{substories_text}

Here are the **new memory items** to analyze:
{new_items_text}

Your tasks:
1. Determine a **substory topic** that summarizes the **new memory items**. The topic should be specific, informative, and include all the main events.
2. You can include multiple substories if there are various memory items can't be summarized into one substory.
3. It is safe to assume that each substory consists of a continuous block of items.
4. Determine whether the current main topic still conceptually covers **all** substory topics. If not, propose a new, broader or more accurate topic.
5. Return a Python dictionary with a list of these new substories (with corresponding indice of the memories/utterances) and the new topic (or None if unchanged).

The return format must be strictly:
```python
{
    "substories": [
        { "sub_topic": "...", "indice": (start, end) },
        ...
    ],
    "new_topic": "..." or None
}"""


SEMANTICIZATION_TEMPLATE = """You are analyzing memory items within the context of a story.

Main story topic:
"{main_topic}"

Existing substories:
{substories_text}

New memory items:
{new_items_text}

Your task:

Identify memory items that contain facts, but **not logically inferable from the main and substory topics**. These items contain specific fact that are important, but would be difficult to retrieve later if only the story headline is used.

Output format:
Return a Python list of dictionaries, each with two keys:
- "fact": the summary of important detail
- "timestamp": the timestamp or reference from the memory item

If there are no such items, return an empty list: []

No verbose or explanation."""


COHERENCE_RETRIEVE_TEMPLATE = """You are given a question and a list of story titles. Some of the stories may contain sub-stories as additional information.
Your task is to select the top {k} stories that are most likely to contain information useful for answering the question.

Question:
{question}

Stories:
{headlines}

Output format: a list of choice(s) beased on the relevance.
Each choice should be a Python dictionary with:
 * "owner": the owner
 * "topic": the topic

Return only the Python list of choice(s) based on the relevance. No verbose."""


# Authored here: the source material requires translating a question into
# graph queries but gives no template for it, so this is the smallest
# contract that fits the store's pattern interface.
GRAPH_QUERY_TRANSLATE_TEMPLATE = """You are given a question about facts mentioned in a conversation. Facts are stored as (subject, predicate, object) triples.

Your task is to translate the question into one or more triple query patterns. Use "?" for any position you do not know.

Question:
{question}

Output format: a Python list of dictionaries, each with:
 * "subject": an entity, or "?"
 * "predicate": a relation, or "?"
 * "object": an entity or value, or "?"

If the question cannot be expressed as triple patterns, return an empty list: []

Return only the Python list. No verbose."""


ANSWER_TEMPLATE = """You are an intelligent memory assistant tasked with retrieving accurate information from conversation memories.

# CONTEXT:
You have access to stories from two speakers in a conversation. These stories contain timestamped information that may be relevant to answering the question.

# INSTRUCTIONS:
1. Carefully analyze all provided stories and pay special attention to the timestamps to determine the answer
2. If the question asks about a specific event or fact, look for direct evidence in the story content
4. If there is a question about time references (like "last year", "two months ago", etc.), calculate the **actual date** based on the story timestamp. For example, if a story note on 4 May 2022 mentions "went to India the previous year," then the trip occurred in 2021.
5. Always convert relative time references to **specific dates, months, or years**. For example, convert "last year" to "2022" or "two months ago" to "March 2023" based on the memory timestamp. Ignore the reference while answering the question.
6. If additional information is needed beyond the stories, take your best guess with commonsense.
7. Be concise. The answer should be less than 5-6 words.

Relevant Stories:
{full_stories}

Additional Stories:
{add_trivas}

Question: {question}

Answer:"""


JUDGE_TEMPLATE = """Your task is to label an answer to a question as CORRECT or WRONG. You will be given the following data:
    (1) a question (posed by one user to another user),
    (2) a gold (ground truth) answer,
    (3) a generated answer
which you will score as CORRECT/WRONG.

The point of the question is to ask about something one user should know about the other user based on their prior conversations.
The gold answer will usually be a concise and short answer that includes the referenced topic, for example:
Question: Do you remember what I got the last time I went to Hawaii?
Gold answer: A shell necklace
The generated answer might be much longer, but you should be generous with your grading - as long as it **expresses the same meaning** as the gold answer, it should be counted as CORRECT.

For time related questions, the gold answer will be a specific date, month, year, etc. The generated answer might be much longer or use relative time references (like "last Tuesday" or "next month"), but you should be generous with your grading - as long as it refers to the same date or time period as the gold answer, it should be counted as CORRECT. Even if the format differs (e.g., "May 7th" vs "7 May"), consider it CORRECT if it's the same date.

Now its time for the real question:
Question: {question}
Gold answer: {gold_answer}
Generated answer: {generated_answer}

First, provide a short (one sentence) explanation of your reasoning, then finish with CORRECT or WRONG.
Do NOT include both CORRECT and WRONG in your response, or it will break the evaluation script.

Just return the label CORRECT or WRONG in a json format with the key as "label"."""


TEMPLATES: dict[PromptKind, str] = {
    PromptKind.STORY_INIT: STORY_INIT_TEMPLATE,
    PromptKind.MEMORY_BINDING: MEMORY_BINDING_TEMPLATE,
    PromptKind.CONSOLIDATION: CONSOLIDATION_TEMPLATE,
    PromptKind.SEMANTICIZATION: SEMANTICIZATION_TEMPLATE,
    PromptKind.COHERENCE_RETRIEVE: COHERENCE_RETRIEVE_TEMPLATE,
    PromptKind.GRAPH_QUERY_TRANSLATE: GRAPH_QUERY_TRANSLATE_TEMPLATE,
    PromptKind.ANSWER: ANSWER_TEMPLATE,
    PromptKind.JUDGE: JUDGE_TEMPLATE,
}

PLACEHOLDERS: dict[PromptKind, tuple[str, ...]] = {
    PromptKind.STORY_INIT: ("conv",),
    PromptKind.MEMORY_BINDING: ("headlines", "recent_context", "new_conv"),
    PromptKind.CONSOLIDATION: ("main_topic", "substories_text", "new_items_text"),
    PromptKind.SEMANTICIZATION: ("main_topic", "substories_text", "new_items_text"),
    PromptKind.COHERENCE_RETRIEVE: ("k", "question", "headlines"),
    PromptKind.GRAPH_QUERY_TRANSLATE: ("question",),
    PromptKind.ANSWER: ("full_stories", "add_trivas", "question"),
    PromptKind.JUDGE: ("question", "gold_answer", "generated_answer"),
}


def render_prompt(kind: PromptKind, inputs: Mapping[str, object]) -> str:
    """Substitute the template's declared placeholders; pure in (kind, inputs).

    Every declared placeholder must be bound (MissingBinding otherwise).
    Substitution happens in one pass, so values containing braces never
    get re-expanded.
    """
    template = TEMPLATES[kind]
    names = PLACEHOLDERS[kind]
    missing = [n for n in names if n not in inputs]
    if missing:
        raise MissingBinding(f"{kind.value}: missing bindings {', '.join(missing)}")
    pattern = re.compile("|".join(re.escape("{" + n + "}") for n in names))
    return pattern.sub(lambda m: str(inputs[m.group(0)[1:-1]]), template)


def prompt_digest(rendered: str) -> str:
    """Stable short key for script tables and exchange logs."""
    return hashlib.sha256(rendered.encode("utf-8")).hexdigest()[:16]
