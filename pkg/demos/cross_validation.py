"""Small k-fold cross-validation run against the median baseline.

A reduced network and short trials keep this under a minute. The learning
check in the acceptance suite runs the default network at larger scale.
Run: python demos/cross_validation.py [report.json]
"""

import sys

from gaf_attn.dataset import SynthConfig, generate_synthetic
from gaf_attn.gaf import EncodeOptions, encode_dataset
from gaf_attn.harness import TrainConfig, cross_validate
from gaf_attn.model import AttnCnnConfig, build_model, count_params

ds = generate_synthetic(SynthConfig(n_subjects=2, trials_per_subject=30, listening_s=(1, 2)), seed=3)
images = encode_dataset(ds, EncodeOptions(paa_target=32))

model_config = AttnCnnConfig(conv_filters=(8, 8, 16, 16))
print(f"{len(images)} images of size {images[0].size}, {count_params(build_model(model_config))} parameters")

report = cross_validate(images, n_folds=4, train_config=TrainConfig(epochs=10, paa_target=32), model_config=model_config)
for fold, (m, b) in enumerate(zip(report.fold_maes, report.baseline_maes)):
    print(f"  fold {fold}: MAE {m:5.2f}  (median baseline {b:5.2f})")
print(f"mean {report.mean:.2f} ± {report.std:.2f} vs baseline {report.baseline_mean:.2f}")

out = sys.argv[1] if len(sys.argv) > 1 else "cv_report.json"
report.write(out)
report.write_curves(out.replace(".json", "_curves.csv"))
print(f"wrote {out}")
