"""
Where the trainable parameters live
===================================

Counts each component of the full-size encoder and checks that adapters and
projection head together make up the whole contrastive-phase budget.
"""

from ipac import EncoderConfig, LoraConfig, count_params
from ipac.encoder import trainable_count

base = EncoderConfig.bert_base()
lora = LoraConfig(r=8, alpha=32)

# each linear map W (out x in) gets A (r x in) and B (out x r)
for comp in ("base", "lora", "projection", "ner_head"):
    print(f"{comp:>12s} {count_params(base, {comp}, lora):>12,d}")

###############################################################################
# Only the adapters and the 768 -> 64 projection train in the second phase.

print(f"{'trainable':>12s} {trainable_count(base, lora):>12,d}")

###############################################################################
# Rank is the only knob that moves the adapter budget, and linearly.

for r in (1, 2, 4, 8, 16):
    print(r, f"{count_params(base, {'lora'}, LoraConfig(r=r)):,}")
