#!/usr/bin/env python3
"""Export an ImageNet EfficientNet-b3 to ONNX with two named feature outputs.

Outputs at a 224x224 input:
  stage4  136x14x14
  stage5  384x7x7

Usage: export_efficientnet_b3.py OUT.onnx
Needs torch, torchvision, onnx and network access for the pretrained weights.
"""
import sys

import torch
import torchvision


class Taps(torch.nn.Module):
    def __init__(self, features):
        super().__init__()
        self.head = features[:6]
        self.tail = features[6:8]

    def forward(self, x):
        a = self.head(x)
        return a, self.tail(a)


def main():
    if len(sys.argv) != 2:
        sys.exit(__doc__)
    weights = torchvision.models.EfficientNet_B3_Weights.IMAGENET1K_V1
    net = torchvision.models.efficientnet_b3(weights=weights).eval()
    model = Taps(net.features).eval()
    x = torch.zeros(1, 3, 224, 224)
    with torch.no_grad():
        a, b = model(x)
    assert tuple(a.shape[1:]) == (136, 14, 14), a.shape
    assert tuple(b.shape[1:]) == (384, 7, 7), b.shape
    torch.onnx.export(model, x, sys.argv[1], input_names=["input"],
                      output_names=["stage4", "stage5"], opset_version=17, dynamo=False)
    print(f"wrote {sys.argv[1]}")


if __name__ == "__main__":
    main()
