"""
Where does the network look?
============================

Train one conduction-disturbance classifier on synthetic records whose
broad QRS complexes are drawn into V1 and aVL, then read back the two
attention layers: the spatial weights rank the leads, the temporal weights
show which samples of each lead were used.
"""
import numpy as np

from atcnn.constants import LEADS
from atcnn.data import EcgRecord, by_partition
from atcnn.leadselect import rank_leads
from atcnn.model import ArchConfig, forward, init_parameters, stack_receptive_field
from atcnn.signal import preprocess_record
from atcnn.synthetic import SyntheticSpec, generate_synthetic
from atcnn.training import TrainConfig, binary_split, build_subdataset, train_binary

T = 500
spec = SyntheticSpec(seed=1, n_samples=T)
raw, masks = generate_synthetic(spec, 400, return_masks=True)
masks = {r.id: m for r, m in zip(raw, masks)}
records = [EcgRecord(r.id, preprocess_record(r.signal), r.labels, r.sampling_rate, r.partition) for r in raw]

train, val = build_subdataset(by_partition(records, "development"), "CD", seed=1)
arch = ArchConfig(input_length=T, channels=8)
model, _ = train_binary(init_parameters(arch, "CD", seed=1), train, val, TrainConfig(target="CD", max_epochs=30, seed=1))

# Spatial attention: median weight of each lead over the validation records
ranking = rank_leads(model, val.X)
print("lead ranking:", " > ".join(ranking.names[:5]), "...")
print("median weights:", np.round(ranking.medians[ranking.order[:5]], 3))

# Temporal attention on one positive test record, lead V1
test = binary_split(by_partition(records, "test"), "CD")
j = int(np.flatnonzero(test.y)[0])
trace = forward(model, test.X[j])
v1 = LEADS.index("V1")
alpha, mask = trace.alpha[v1], masks[test.ids[j]][v1]
print(f"\nrecord {test.ids[j]}: p(CD) = {trace.p:.3f}")
print("top-10 attended samples:", np.sort(np.argsort(alpha)[-10:]))
print("injected samples start at:", np.flatnonzero(mask & ~np.roll(mask, 1)))

# The stack is causal, so a feature at sample n is fully visible only up to
# n + receptive field - 1; compare attention on the window and just after it.
rf = stack_receptive_field(arch)
for lag in (0, rf // 3, rf // 2):
    m = np.roll(mask, lag)
    print(f"lag {lag:2d}: attention inside / outside window = {alpha[m].mean() / alpha[~m].mean():.2f}")
