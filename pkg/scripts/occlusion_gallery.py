"""Render occlusion heatmaps for the first few falling test examples."""
import argparse
import os

from blocktower.dataset import load_dataset
from blocktower.evalmetrics import export_heatmap_pgm, occlusion_heatmap
from blocktower.learn.model import load_checkpoint


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dataset", required=True)
    ap.add_argument("--model", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--count", type=int, default=8)
    args = ap.parse_args()

    model = load_checkpoint(args.model)
    os.makedirs(args.out, exist_ok=True)
    fallen = [e for e in load_dataset(args.dataset, "test") if e.record.fell]
    for example in fallen[: args.count]:
        heatmap = occlusion_heatmap(model, example.image)
        export_heatmap_pgm(heatmap, os.path.join(args.out, example.record.id))
        print(example.record.id, "delta-p range %.4f .. %.4f"
              % (heatmap.min(), heatmap.max()))


if __name__ == "__main__":
    main()
