# %% [markdown]
# # Quiescence on a separable stream
#
# With well separated XOR clusters the learners stop suffering loss after a
# few hundred rounds. The dynamic protocol then goes silent, while periodic
# averaging keeps paying for every sync even though nothing changes.

# %%
import numpy as np

from driftsync.learners import Compression, LearnerParams
from driftsync.protocol import SyncStrategy
from driftsync.rkhs import KernelSpec
from driftsync.simulator import ExperimentConfig, run
from driftsync.streams import StreamSpec

cfg = ExperimentConfig(
    m=4, T=1000,
    stream=StreamSpec("gaussian_xor", seed=1, cluster_sd=0.15),
    kernel=KernelSpec("gaussian", 0.5),
    params=LearnerParams(1.0, 0.0, Compression("truncate", 50)),
    strategy=SyncStrategy.dynamic(0.5),
)
dyn = run(cfg)
per = run(cfg.replace(strategy=SyncStrategy.periodic(10)))

# %%
last_loss = int(np.nonzero(dyn.losses.sum(axis=1))[0].max()) + 1
print("last round with loss:", last_loss)
print("dynamic quiescent from round", dyn.quiescence_round)
for t in (250, 500, 750, 1000):
    print(t, int(dyn.cum_bytes_series[t - 1]), int(per.cum_bytes_series[t - 1]))

# %% [markdown]
# The bound battery used by `driftsync verify` can also be run directly.

# %%
from driftsync.verify import run_checks

for check in run_checks(dyn, run(cfg.replace(strategy=SyncStrategy.periodic(1)))):
    print(check)
