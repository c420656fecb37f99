use ballmap::boundary::{self, BoundarySurface};

fn main() {
    for refine in [4u32, 10] {
        let mesh = ballmap::generate::ball(refine).unwrap();
        let surface = BoundarySurface::from_mesh(&mesh);
        let init = boundary::initial_sphere_map(&surface).unwrap();
        let std0 = boundary::area_ratio_std(&surface, init.coords());
        for iters in [10usize, 30, 60, 100] {
            let refined = boundary::area_preserving_refine(&surface, &init, iters);
            let s = boundary::area_ratio_std(&surface, refined.coords());
            println!("refine={refine} nb={} iters={iters}: std {std0:.4} -> {s:.4}", surface.vertex_count());
        }
    }
}
