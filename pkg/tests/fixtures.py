"""Hand-built gold/predicted treebanks with known scores."""

from deptransfer.conllu import Sentence, Token, Treebank


def _sent(sid, forms, heads, labels):
    return Sentence(tuple(Token(i, f, "X", h, l) for i, (f, h, l) in
                          enumerate(zip(forms, heads, labels), start=1)), sent_id=sid)


# sentence: (forms, gold heads, gold labels, predicted heads, predicted labels)
FIVE = [
    # perfect
    ("a b c".split(), [2, 0, 2], ["nsubj", "root", "obj"], [2, 0, 2], ["nsubj", "root", "obj"]),
    # head wrong on word 1, label right
    ("a b c".split(), [2, 0, 2], ["nsubj", "root", "obj"], [3, 0, 2], ["nsubj", "root", "obj"]),
    # label wrong on word 1, head right
    ("a b".split(), [2, 0], ["nsubj", "root"], [2, 0], ["obj", "root"]),
    # word 3 wrong in both, word 4 head wrong only
    ("a b c d".split(), [2, 0, 2, 3], ["nsubj", "root", "obj", "punct"],
     [2, 0, 4, 2], ["nsubj", "root", "obl:tmod", "punct"]),
    # subtype difference only, which does not count
    ("a b c".split(), [0, 1, 1], ["root", "obl:tmod", "punct"], [0, 1, 1], ["root", "obl", "punct"]),
]

FIVE_WORDS = 15
FIVE_UAS = 12 / 15
FIVE_LAS = 11 / 15
FIVE_CONFUSION = [("nsubj", "obj", 1), ("obj", "obl", 1)]


def five_sentence_fixture():
    gold = Treebank(tuple(_sent(f"s{k}", f, gh, gl) for k, (f, gh, gl, _, _) in enumerate(FIVE, 1)))
    pred = Treebank(tuple(_sent(f"s{k}", f, ph, pl) for k, (f, _, _, ph, pl) in enumerate(FIVE, 1)))
    return gold, pred
