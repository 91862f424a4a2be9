"""
How many leads does a classifier need?
======================================

When a disorder is visible in a single lead, a model trained on that lead
alone should match the full 12-lead model. Rank the leads by spatial
attention, retrain on the top-k leads for k = 1..12 and keep the smallest k
whose F1 no larger k beats by more than a tolerance.
"""
from atcnn.constants import LEADS
from atcnn.data import EcgRecord, by_partition
from atcnn.leadselect import rank_leads, sweep_subsets
from atcnn.model import ArchConfig, init_parameters
from atcnn.signal import preprocess_record
from atcnn.synthetic import generate_synthetic, single_lead_spec
from atcnn.training import TrainConfig, binary_split, build_subdataset, train_binary

T = 300
raw = generate_synthetic(single_lead_spec("CD", "V1", n_samples=T, seed=3), 300)
records = [EcgRecord(r.id, preprocess_record(r.signal), r.labels, r.sampling_rate, r.partition) for r in raw]
train, val = build_subdataset(by_partition(records, "development"), "CD", seed=1)
test = binary_split(by_partition(records, "test"), "CD")

arch = ArchConfig(input_length=T, channels=8)
cfg = TrainConfig("CD", max_epochs=30, patience=10, seed=1)
model, _ = train_binary(init_parameters(arch, "CD", seed=1), train, val, cfg)
ranking = rank_leads(model, val.X)
print("ranking:", " ".join(ranking.names))

# 12 retrainings from scratch; k = 1 uses the single-lead variant
result = sweep_subsets(ranking, train, val, test, arch, cfg)
for subset, f1 in result.entries:
    print(f"k={len(subset):2d}  F1 {f1:.3f}  {' '.join(LEADS[i] for i in subset)}")
print("optimal:", [LEADS[i] for i in result.optimal_subset])
