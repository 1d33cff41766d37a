"""
Scoring entity spans
====================

Tags become spans, spans are matched exactly, and scores are pooled over all
sentences before computing precision and recall.
"""

from ipac.data import repair_iob
from ipac.evaluation import aggregate_report, extract_spans, format_table, tag_f1

gold = ["B-PER", "I-PER", "O", "B-LOC"]
pred = ["B-PER", "O", "O", "B-LOC"]
print(extract_spans(gold))
print(extract_spans(pred))

# one of two predicted spans is right, one of two gold spans is found
print(tag_f1([gold], [pred]))

###############################################################################
# A stray inside tag with nothing to continue is read as a span start.

print(repair_iob(["O", "I-ORG", "I-ORG"]))

###############################################################################
# Per-language scores are summarised with a sample standard deviation.

scores = {"swa": 41.0, "ind": 52.5, "hin": 38.25, "cmn": 47.0}
print(aggregate_report(scores))
print(format_table(scores), end="")
