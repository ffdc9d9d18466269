"""Deterministic synthetic corpus for offline end-to-end runs.

Generates code-mixed queries in all five languages over the three dataset
splits, each paired with a small code snippet that contains the query's
identifiers. Roughly half the queries embed a term from the confusion
lexicon so the synthetic ASR has realistic distortions to apply.
"""

from __future__ import annotations

from .corpus import Corpus, QueryRecord, make_corpus
from .corruption import Lcg64, fnv1a64
from .refinement import default_confusion_lexicon

_NAT_LANGS = ("en", "hi", "gu", "ta", "bn")
_SPLITS = (
    ("CSN", "python"), ("CSN", "java"), ("CSN", "php"),
    ("CSk", "python"), ("CSk", "java"), ("CSk", "php"),
    ("QA", "python"), ("QA", "java"),
)

_HEADS = (
    "get", "set", "load", "parse", "merge", "sort", "fetch", "count",
    "build", "scan", "read", "write", "push", "pull", "check", "trace",
)
_TAILS = (
    "user", "data", "node", "list", "index", "token", "cache", "value",
    "item", "query", "file", "sum", "graph", "batch", "frame", "score",
)

_TEMPLATES = {
    "en": (
        "how do i use {ident} in {plang}",
        "why does {ident} fail when {cond} in {plang}",
        "explain what {ident} does in this {plang} function",
        "why am i getting {extra} error inside {ident}",
    ),
    "hi": (
        "{plang} में {ident} का उपयोग कैसे करें",
        "{cond} होने पर {ident} विफल क्यों होता है",
        "यह {plang} फंक्शन {ident} क्या करता है",
        "{ident} में {extra} त्रुटि क्यों आती है",
    ),
    "gu": (
        "{plang} માં {ident} નો ઉપયોગ કેવી રીતે કરવો",
        "{cond} હોય ત્યારે {ident} કેમ નિષ્ફળ જાય છે",
        "આ {plang} ફંક્શન {ident} શું કરે છે",
        "{ident} માં {extra} ભૂલ કેમ આવે છે",
    ),
    "ta": (
        "{plang} இல் {ident} ஐ எப்படி பயன்படுத்துவது",
        "{cond} இருக்கும் போது {ident} ஏன் தோல்வி அடைகிறது",
        "இந்த {plang} செயல்பாடு {ident} என்ன செய்கிறது",
        "{ident} இல் {extra} பிழை ஏன் வருகிறது",
    ),
    "bn": (
        "{plang} এ {ident} কিভাবে ব্যবহার করব",
        "{cond} হলে {ident} কেন ব্যর্থ হয়",
        "এই {plang} ফাংশন {ident} কি করে",
        "{ident} এ {extra} ত্রুটি কেন হয়",
    ),
}

_CONDITIONS = ("x == y", "n <= 0", "a != b", "total >= limit")

_CODE_TEMPLATES = {
    "python": 'def {snake}({a}, {b}):\n    """{doc}"""\n    {camel} = {a} + {b}\n    return {camel}\n',
    "java": "public int {snake}(int {a}, int {b}) {{\n    // {doc}\n    int {camel} = {a} + {b};\n    return {camel};\n}}\n",
    "php": "function {snake}(${a}, ${b}) {{\n    // {doc}\n    ${camel} = ${a} + ${b};\n    return ${camel};\n}}\n",
}


def make_synthetic_corpus(n_records: int = 200, seed: int = 7) -> Corpus:
    rng = Lcg64(seed ^ fnv1a64("synthetic-corpus"))
    confusables = [intended for intended, _ in default_confusion_lexicon().reversed_pairs]
    records = []
    for i in range(n_records):
        dataset, prog_lang = _SPLITS[i % len(_SPLITS)]
        nat_lang = _NAT_LANGS[i % len(_NAT_LANGS)]
        head = _HEADS[(i * 7 + rng.next_below(4)) % len(_HEADS)]
        tail = _TAILS[(i * 3 + rng.next_below(4)) % len(_TAILS)]
        snake = f"{head}_{tail}"
        camel = f"{head}{tail.capitalize()}"
        ident = snake if i % 2 == 0 else camel
        extra = confusables[rng.next_below(len(confusables))] if i % 2 == 0 else "runtime"
        template = _TEMPLATES[nat_lang][i % 4]
        reference = template.format(
            ident=ident,
            plang=prog_lang,
            cond=_CONDITIONS[rng.next_below(len(_CONDITIONS))],
            extra=extra,
        )
        code = _CODE_TEMPLATES[prog_lang].format(
            snake=snake,
            camel=camel,
            a=_TAILS[(i * 5 + 1) % len(_TAILS)],
            b=_HEADS[(i * 11 + 5) % len(_HEADS)],
            doc=f"{head} the {tail} record set, variant {i}",
        )
        gold = None
        if dataset == "QA":
            gold = f"the function {snake} combines both arguments and returns the {tail} total"
        records.append(
            QueryRecord(
                id=f"syn-{i:04d}",
                dataset=dataset,
                prog_lang=prog_lang,
                nat_lang=nat_lang,
                reference_text=reference,
                code=code,
                gold_answer=gold,
            )
        )
    return make_corpus(records, source=f"synthetic(seed={seed})")
