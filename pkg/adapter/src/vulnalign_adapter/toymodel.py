"""Build a desk-scale transformers checkpoint for offline use.

Trains a byte-level BPE tokenizer on a code corpus and pairs it with a
small randomly initialized RoBERTa-style sequence classifier, saved in the
standard transformers checkpoint layout so the exporter can load it like
any published model.
"""

import torch
from tokenizers import ByteLevelBPETokenizer
from tokenizers.processors import RobertaProcessing
from transformers import (
    PreTrainedTokenizerFast,
    RobertaConfig,
    RobertaForSequenceClassification,
)


def build_toy_checkpoint(corpus, out_dir, vocab_size=500, hidden_size=32,
                         layers=2, heads=2, seed=0):
    tk = ByteLevelBPETokenizer()
    tk.train_from_iterator(
        corpus, vocab_size=vocab_size,
        special_tokens=["<s>", "<pad>", "</s>", "<unk>"],
    )
    tk.post_processor = RobertaProcessing(
        sep=("</s>", tk.token_to_id("</s>")),
        cls=("<s>", tk.token_to_id("<s>")),
    )
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=tk,
        bos_token="<s>", eos_token="</s>", pad_token="<pad>",
        unk_token="<unk>", cls_token="<s>", sep_token="</s>",
        model_max_length=512,
    )
    config = RobertaConfig(
        vocab_size=tk.get_vocab_size(),
        hidden_size=hidden_size,
        num_hidden_layers=layers,
        num_attention_heads=heads,
        intermediate_size=2 * hidden_size,
        max_position_embeddings=514,
        num_labels=2,
        initializer_range=0.2,  # random weights; wider init keeps logits non-degenerate
        pad_token_id=tokenizer.pad_token_id,
        bos_token_id=tokenizer.bos_token_id,
        eos_token_id=tokenizer.eos_token_id,
    )
    torch.manual_seed(seed)
    model = RobertaForSequenceClassification(config)
    model.save_pretrained(out_dir)
    tokenizer.save_pretrained(out_dir)
    return out_dir
