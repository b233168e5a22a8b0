"""L2 projection error of exp(x1) on sphere meshes with order m+1, m = 0..3."""

import numpy as np

from curvebem.fe_space import build_space, l2_error, l2_project
from curvebem.geometry import Sphere, build_curved_mesh
from curvebem.harness import DOF_CAP, dof_count, eoc


def f(x):
    return np.exp(x[:, 0])


def main():
    print("m,level,h,dofs,error,eoc")
    for m in range(4):
        prev = None
        for level in range(1, 5):
            if dof_count(m, level) > DOF_CAP:
                break
            space = build_space(build_curved_mesh(Sphere(), m + 1, level), m)
            err = l2_error(l2_project(space, f), f)
            h = space.mesh.h
            rate = "" if prev is None else f"{eoc(prev[1], err, prev[0], h):.4f}"
            print(f"{m},{level},{h:.6g},{space.n_dofs},{err:.6e},{rate}")
            prev = (h, err)


if __name__ == "__main__":
    main()
