use ballmap::laplacian::stretch_factors;
use ballmap::vsem::{self, InitialLaplacian, VsemConfig};

fn main() {
    let cases: Vec<(&str, ballmap::TetMesh)> = vec![
        ("shell_ball(3,2)", ballmap::generate::shell_ball(3, 2).unwrap()),
        ("ball(10)", ballmap::generate::ball(10).unwrap()),
        ("ball(20)", ballmap::generate::ball(20).unwrap()),
        ("shell_ball(4,4)", ballmap::generate::shell_ball(4, 4).unwrap()),
    ];
    for (name, mesh) in cases {
        let t0 = std::time::Instant::now();
        let mesh = mesh.normalize_total_measure();
        let bnd = ballmap::boundary::compute(&mesh, 50).unwrap();
        let t1 = std::time::Instant::now();
        let (map, report) =
            vsem::run(&mesh, &bnd, &VsemConfig::default(), InitialLaplacian::Identity).unwrap();
        let sf = stretch_factors(&mesh, &map);
        let e = report.final_energy();
        println!(
            "{name}: q={} n={} | boundary {:.1}s vsem {:.1}s | mean={:.4} std={:.4} E={:.4} (2pi={:.4}) foldings={}",
            mesh.tet_count(), mesh.vertex_count(),
            (t1 - t0).as_secs_f64(), t1.elapsed().as_secs_f64(),
            sf.mean, sf.std, e, 2.0*std::f64::consts::PI, report.foldings
        );
    }
}
