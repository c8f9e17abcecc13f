from broncholoc import (default_tree, detect_branch, generate_sequence,
                        transition_matrix)
from broncholoc.likelihood import FileLikelihoodProvider, normalize
from broncholoc.pipeline import localize_stream
from broncholoc.synthgen import parse_walk

WALK = 'TRA,RMB,BronInt,RLL'   # set to any walk along tree edges
NOISE = 0.5                    # flat likelihood noise on every frame
SEED = 7

tree = default_tree()
prior = transition_matrix(tree, alpha=1e-9, m=1)
seq = generate_sequence(tree, parse_walk(tree, WALK), noise=NOISE, seed=SEED)
provider = FileLikelihoodProvider([normalize(row) for row in seq.likelihoods])

print("Frames:", len(seq))
hits = 0
for step in localize_stream(seq.frames, provider, tree, prior):
    truth = tree.nodes[seq.truth[step.t]]
    best = tree.nodes[step.posterior.argmax()]
    hits += int(truth == best)
    mark = "*" if step.updated else " "
    print("{0:3d} {1} lumens={2} truth={3:8s} top1={4:8s} p={5:.3f}".format(
        step.t, mark, step.detection.lumen_count, truth, best,
        step.posterior.probs.max()))

print("Top-1:", round(hits / len(seq), 3))
print("Branch frames:", sum(detect_branch(f).is_branch for f in seq.frames))
print("Done.")
