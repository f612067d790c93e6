# %% [markdown]
# Pretrain every encoder on a planted graph, detect on the same graph and
# on a freshly generated one, and compare with two baselines.  The widths
# and epoch budgets here are cut down so the script finishes in about a
# minute; pass --full for the default configuration (several minutes).

# %%
import sys
import time

import numpy as np

from sgrl.metrics import evaluate, format_table
from sgrl.pipeline import PipelineConfig, attribute_gbdt_scores, detect, ig_only_scores, pretrain
from sgrl.synthgen import default_config, generate

full = "--full" in sys.argv
cfg = PipelineConfig() if full else PipelineConfig(f=4, f1=16, f_det=8, f1_det=32, max_epochs=60, det_epochs=60)
data = generate(default_config().with_(seed=0))
test = np.flatnonzero(~data.observed)

t = time.time()
bundle = pretrain(data.graph, cfg, log=print)
print(f"pretrained in {time.time() - t:.0f}s, pseudo labels {bundle.spec.indices}")
for part, hist in bundle.history.items():
    print(f"  {part}: kept epoch {hist.stopped_epoch}, probes {[round(v, 3) for _, v in hist.probes]}")

# %% Detection on held-out nodes of the training graph
report = detect(bundle, data.graph)
print(format_table(evaluate(report.scores[test], data.truth[test], cfg.rho)))

# %% Baselines on the same split
for name, scores in (("IG only", ig_only_scores(data.graph, cfg)), ("attributes gbdt", attribute_gbdt_scores(data.graph, cfg))):
    m = evaluate(scores[test], data.truth[test], cfg.rho)
    print(f"{name:16s} AUC {m['AUC']:.3f}  F1 {m['F1']:.3f}")

# %% A graph the model has never seen
before = bundle.checksum()
fresh = generate(default_config().with_(seed=1000))
m = evaluate(detect(bundle, fresh.graph).scores, fresh.truth, cfg.rho)
print(f"fresh graph: AUC {m['AUC']:.3f}  F1 {m['F1']:.3f}  checksum unchanged: {bundle.checksum() == before}")
