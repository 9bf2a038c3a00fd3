//! Slab-mesh shape descriptors (14 values).
//!
//! The 2-D region is treated as a one-voxel-thick solid with unit spacing:
//! voxel centers sit in the z = 0 plane and every neighboring sample (the
//! padded ring in-plane, the planes above and below) is empty. Midpoint
//! marching over each 2×2 neighborhood of mask bits then yields a closed
//! triangle mesh whose vertices are the points half a voxel above and below
//! every region pixel plus the in-plane midpoints of region/background
//! 4-neighbor pairs. Volume is the divergence-theorem sum of signed
//! tetrahedra over the oriented triangles and surface area is the summed
//! triangle area, so both follow from the emitted geometry rather than from
//! per-pattern constants.

use super::{sym_eigenvalues, RegionMask};

type Point = [f64; 3]; // (z, y, x)

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(u: Point, v: Point) -> Point {
    [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ]
}

fn dot(u: Point, v: Point) -> f64 {
    u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
}

/// Closed oriented triangle mesh of the slab surface.
struct SlabMesh {
    triangles: Vec<[Point; 3]>,
}

/// A surface polygon emitted for one 2×2 neighborhood, plus a reference point
/// just inside the solid. The polygon is fan-triangulated from its first
/// vertex; each triangle is wound so its normal points away from the
/// reference, which orients the whole mesh outward.
struct Facet {
    loop_points: Vec<Point>,
    inside_ref: Point,
}

impl SlabMesh {
    fn push_facet(&mut self, facet: Facet) {
        let p0 = facet.loop_points[0];
        for pair in facet.loop_points[1..].windows(2) {
            let (p1, p2) = (pair[0], pair[1]);
            let centroid = [
                (p0[0] + p1[0] + p2[0]) / 3.0,
                (p0[1] + p1[1] + p2[1]) / 3.0,
                (p0[2] + p1[2] + p2[2]) / 3.0,
            ];
            let normal = cross(sub(p1, p0), sub(p2, p0));
            if dot(normal, sub(centroid, facet.inside_ref)) >= 0.0 {
                self.triangles.push([p0, p1, p2]);
            } else {
                self.triangles.push([p0, p2, p1]);
            }
        }
    }

    fn volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| dot(t[0], cross(t[1], t[2])))
            .sum::<f64>()
            / 6.0
    }

    fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let n = cross(sub(t[1], t[0]), sub(t[2], t[0]));
                dot(n, n).sqrt() / 2.0
            })
            .sum()
    }

    /// Distinct vertex positions. Every coordinate is an exact multiple of
    /// 0.5, so bit-level dedup is sound once -0.0 (from mirroring the y = 0
    /// midpoints) is folded into +0.0.
    fn vertices(&self) -> Vec<Point> {
        let key = |v: f64| if v == 0.0 { 0.0f64.to_bits() } else { v.to_bits() };
        let mut keys: Vec<[u64; 3]> = self
            .triangles
            .iter()
            .flatten()
            .map(|p| [key(p[0]), key(p[1]), key(p[2])])
            .collect();
        keys.sort_unstable();
        keys.dedup();
        keys.iter()
            .map(|k| {
                [
                    f64::from_bits(k[0]),
                    f64::from_bits(k[1]),
                    f64::from_bits(k[2]),
                ]
            })
            .collect()
    }
}

/// Emit the surface polygons of the upper half-cell over the 2×2 block whose
/// top-left pixel center is (cy, cx). Inside flags are given in
/// [(0,0), (0,1), (1,0), (1,1)] order.
fn emit_upper(cy: isize, cx: isize, inside: [bool; 4], out: &mut Vec<Facet>) {
    let corner = |dy: usize, dx: usize| -> Point {
        [0.0, (cy + dy as isize) as f64, (cx + dx as isize) as f64]
    };
    let above = |dy: usize, dx: usize| -> Point {
        [0.5, (cy + dy as isize) as f64, (cx + dx as isize) as f64]
    };
    let midpoint = |a: Point, b: Point| -> Point {
        [0.0, (a[1] + b[1]) / 2.0, (a[2] + b[2]) / 2.0]
    };
    let idx = |dy: usize, dx: usize| dy * 2 + dx;

    // The cut triangle around a lone inside corner (also used for each half
    // of the diagonal pattern, which stays separated).
    let corner_cap = |dy: usize, dx: usize| -> Facet {
        let p = corner(dy, dx);
        let along_y = midpoint(p, corner(1 - dy, dx));
        let along_x = midpoint(p, corner(dy, 1 - dx));
        Facet {
            loop_points: vec![above(dy, dx), along_y, along_x],
            inside_ref: p,
        }
    };

    match inside.iter().filter(|&&b| b).count() {
        0 => {}
        1 => {
            let (dy, dx) = (0..2)
                .flat_map(|dy| (0..2).map(move |dx| (dy, dx)))
                .find(|&(dy, dx)| inside[idx(dy, dx)])
                .expect("one corner set");
            out.push(corner_cap(dy, dx));
        }
        2 if inside[idx(0, 0)] && inside[idx(1, 1)] => {
            out.push(corner_cap(0, 0));
            out.push(corner_cap(1, 1));
        }
        2 if inside[idx(0, 1)] && inside[idx(1, 0)] => {
            out.push(corner_cap(0, 1));
            out.push(corner_cap(1, 0));
        }
        2 => {
            // Adjacent pair: a planar wall from the two in-plane midpoints up
            // to the two crossing points above the pair.
            let (a, b) = if inside[idx(0, 0)] && inside[idx(0, 1)] {
                ((0, 0), (0, 1))
            } else if inside[idx(1, 0)] && inside[idx(1, 1)] {
                ((1, 0), (1, 1))
            } else if inside[idx(0, 0)] && inside[idx(1, 0)] {
                ((0, 0), (1, 0))
            } else {
                ((0, 1), (1, 1))
            };
            let (pa, pb) = (corner(a.0, a.1), corner(b.0, b.1));
            let out_of = |c: (usize, usize), other: (usize, usize)| -> (usize, usize) {
                // The out-corner adjacent to `c` that is not `other`.
                if c.0 == other.0 {
                    (1 - c.0, c.1)
                } else {
                    (c.0, 1 - c.1)
                }
            };
            let oa = out_of(a, b);
            let ob = out_of(b, a);
            out.push(Facet {
                loop_points: vec![
                    midpoint(pa, corner(oa.0, oa.1)),
                    midpoint(pb, corner(ob.0, ob.1)),
                    above(b.0, b.1),
                    above(a.0, a.1),
                ],
                inside_ref: midpoint(pa, pb),
            });
        }
        3 => {
            // Pentagon: crossings above the three inside corners plus the two
            // midpoints flanking the missing corner, fanned from the vertex
            // above the corner diagonal to the missing one.
            let (my, mx) = (0..2)
                .flat_map(|dy| (0..2).map(move |dx| (dy, dx)))
                .find(|&(dy, dx)| !inside[idx(dy, dx)])
                .expect("one corner clear");
            let diag = (1 - my, 1 - mx);
            let side_y = (1 - my, mx); // inside corner sharing the missing one's column
            let side_x = (my, 1 - mx); // inside corner sharing the missing one's row
            let missing = corner(my, mx);
            let centroid = [
                0.0,
                (corner(diag.0, diag.1)[1] + corner(side_y.0, side_y.1)[1] + corner(side_x.0, side_x.1)[1]) / 3.0,
                (corner(diag.0, diag.1)[2] + corner(side_y.0, side_y.1)[2] + corner(side_x.0, side_x.1)[2]) / 3.0,
            ];
            out.push(Facet {
                loop_points: vec![
                    above(diag.0, diag.1),
                    above(side_x.0, side_x.1),
                    midpoint(corner(side_x.0, side_x.1), missing),
                    midpoint(corner(side_y.0, side_y.1), missing),
                    above(side_y.0, side_y.1),
                ],
                inside_ref: centroid,
            });
        }
        4 => {
            out.push(Facet {
                loop_points: vec![above(0, 0), above(0, 1), above(1, 1), above(1, 0)],
                inside_ref: [0.0, cy as f64 + 0.5, cx as f64 + 0.5],
            });
        }
        _ => unreachable!(),
    }
}

fn build_mesh(mask: &RegionMask) -> SlabMesh {
    let mut mesh = SlabMesh {
        triangles: Vec::new(),
    };
    let mut facets = Vec::new();
    for cy in -1..mask.height() as isize {
        for cx in -1..mask.width() as isize {
            let inside = [
                mask.contains_signed(cy, cx),
                mask.contains_signed(cy, cx + 1),
                mask.contains_signed(cy + 1, cx),
                mask.contains_signed(cy + 1, cx + 1),
            ];
            emit_upper(cy, cx, inside, &mut facets);
        }
    }
    for facet in facets {
        // Lower half: mirror through the mask plane.
        let mirrored = Facet {
            loop_points: facet
                .loop_points
                .iter()
                .map(|p| [-p[0], p[1], p[2]])
                .collect(),
            inside_ref: [
                -facet.inside_ref[0],
                facet.inside_ref[1],
                facet.inside_ref[2],
            ],
        };
        mesh.push_facet(facet);
        mesh.push_facet(mirrored);
    }
    mesh
}

pub(super) fn features(mask: &RegionMask) -> Vec<f64> {
    let np = mask.count();
    let mesh = build_mesh(mask);
    let volume = mesh.volume();
    let area = mesh.area();
    debug_assert!(volume > 0.0, "closed outward mesh has positive volume");

    // Pairwise mesh-vertex diameters: overall, and within planes of constant
    // z (slice), x (column), and y (row).
    let verts = mesh.vertices();
    let (mut d3, mut slice, mut column, mut row) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..verts.len() {
        for j in i + 1..verts.len() {
            let dz = verts[i][0] - verts[j][0];
            let dy = verts[i][1] - verts[j][1];
            let dx = verts[i][2] - verts[j][2];
            d3 = d3.max(dz * dz + dy * dy + dx * dx);
            if dz == 0.0 {
                slice = slice.max(dy * dy + dx * dx);
            }
            if dx == 0.0 {
                column = column.max(dz * dz + dy * dy);
            }
            if dy == 0.0 {
                row = row.max(dz * dz + dx * dx);
            }
        }
    }

    // Principal axes of the voxel-center cloud: sample covariance (n−1
    // denominator) of (z, y, x) coordinates. The z row is identically zero,
    // giving the slab a zero least axis.
    let eig = if np < 2 {
        vec![0.0, 0.0, 0.0]
    } else {
        let mut mean = [0.0f64; 3];
        let pts: Vec<Point> = mask
            .indices()
            .map(|i| {
                [
                    0.0,
                    (i / mask.width()) as f64,
                    (i % mask.width()) as f64,
                ]
            })
            .collect();
        for p in &pts {
            for k in 0..3 {
                mean[k] += p[k];
            }
        }
        for m in &mut mean {
            *m /= np as f64;
        }
        let mut cov = [0.0f64; 9];
        for p in &pts {
            for r in 0..3 {
                for c in 0..3 {
                    cov[r * 3 + c] += (p[r] - mean[r]) * (p[c] - mean[c]);
                }
            }
        }
        for v in &mut cov {
            *v /= (np - 1) as f64;
        }
        sym_eigenvalues(&cov, 3)
    };
    let (l_major, l_minor, l_least) = (eig[0].max(0.0), eig[1].max(0.0), eig[2].max(0.0));
    let (elongation, flatness) = if l_major <= 0.0 {
        (1.0, 1.0)
    } else {
        ((l_minor / l_major).sqrt(), (l_least / l_major).sqrt())
    };

    let sphericity = (36.0 * std::f64::consts::PI * volume * volume).cbrt() / area;

    vec![
        elongation,
        flatness,
        4.0 * l_least.sqrt(),
        4.0 * l_major.sqrt(),
        column.sqrt(),
        row.sqrt(),
        slice.sqrt(),
        d3.sqrt(),
        volume,
        4.0 * l_minor.sqrt(),
        sphericity,
        area,
        area / volume,
        np as f64,
    ]
}
