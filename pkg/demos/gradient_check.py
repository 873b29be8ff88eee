"""Check every hand-written backward pass against finite differences.

First the single layers, then the whole synthesis pipeline on a tiny
scene, where the disparity gradient passes through the numerically
differentiated warp. Finally, a deliberately broken backward pass shows
what a failure looks like.
"""
from lfsynth.gradcheck import layer_suite, pipeline_suite

print("layers")
for result in layer_suite(seed=0):
    print("  " + result.line())

print("pipeline, double precision")
for result in pipeline_suite(seed=0, precision="double"):
    print("  " + result.line())

# a smaller Jacobian step trades truncation error for round-off
print("pipeline, Jacobian step 0.001")
for result in pipeline_suite(seed=0, jacobian_step=1e-3):
    print("  " + result.line())

print("layers with gradients scaled by 1.01")
for result in layer_suite(seed=0, perturb=0.01):
    print("  " + result.line())
