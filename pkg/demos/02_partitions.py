"""
How skewed are the client splits?
=================================

Three ways to spread a labelled dataset over 100 clients. The
concentration ``c`` controls how far each client drifts from the global
label mix (Dirichlet, pathological) or how unequal client sizes are
(quantity skew).
"""
import numpy as np

from fedstop.data import (generate_synthetic, label_distribution, partition_dirichlet,
                          partition_pathological, partition_quantity, tv_distance)

ds = generate_synthetic(num_classes=4, input_dim=10, n_per_class=2500, class_sep=2.5,
                        seed=0)
glob = label_distribution(ds.labels, 4)
print("global label mix:", glob)

# Dirichlet label skew: small c gives near single-class clients
for c in (0.01, 0.1, 1.0, 100.0):
    part = partition_dirichlet(ds, c, 100, np.random.default_rng(1))
    tv = np.mean([tv_distance(label_distribution(ds.labels[ix], 4), glob)
                  for ix in part.client_indices])
    print(f"dirichlet c={c:<6g} mean TV distance to global = {tv:.3f}")

# pathological: every client holds exactly c classes
for c in (1, 2, 3):
    part = partition_pathological(ds, c, 100, np.random.default_rng(2))
    n_labels = {len(np.unique(ds.labels[ix])) for ix in part.client_indices}
    print(f"pathological c={c}: labels per client = {sorted(n_labels)}")

# quantity skew keeps the label mix but not the sizes
for c in (0.01, 1.0, 1e9):
    sizes = partition_quantity(ds, c, 100, np.random.default_rng(3)).sizes()
    print(f"quantity c={c:<6g} sizes min={sizes.min():5d} max={sizes.max():5d}")
