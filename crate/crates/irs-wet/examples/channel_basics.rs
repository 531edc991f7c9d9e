//! Samples a fading realization, groups the surface elements, and evaluates
//! harvested energy for a few transmit/reflection settings.
//!
//! Run with: `cargo run --release --example channel_basics`

use irs_wet::channel::{
    decompose_covariance, group_composite, harvested_energy, path_loss, sample_channels, Geometry,
    ReflectionConfig, TransmitConfig,
};

fn main() -> irs_wet::Result<()> {
    let geom = Geometry::default_indoor();
    println!(
        "path loss: {:.3e} over {:.2} m (transmitter-surface), {:.3e} over {:.2} m (surface-receiver)",
        path_loss(geom.et_irs_distance(), &geom)?,
        geom.et_irs_distance(),
        path_loss(geom.irs_er_distance(), &geom)?,
        geom.irs_er_distance(),
    );

    let (n, m_t, k) = (64, 4, 8);
    let ch = sample_channels(&geom, n, m_t, 7)?;
    let gch = group_composite(&ch, k)?;
    println!(
        "sampled {}x{} cascaded matrix, grouped to {}x{} ({} elements per group)",
        ch.n_elements(),
        ch.antennas(),
        gch.group_count(),
        gch.antennas(),
        k
    );

    let (p_b, eta, t_s) = (1.0, 0.5, 1.0);
    let v = ReflectionConfig::from_phases(&vec![0.0; gch.group_count()]);
    let iso = TransmitConfig::isotropic(m_t, p_b);
    println!(
        "isotropic covariance, all-zero phases: {:.4e} J",
        harvested_energy(&iso, &v, &gch, eta, t_s)?
    );

    // full-power beam along the effective channel: the best rank-1 choice
    // for this reflection
    let e = gch.effective_vector(&v)?;
    let mrt = TransmitConfig::beam(e.clone(), p_b, p_b)?;
    let best = harvested_energy(&mrt, &v, &gch, eta, t_s)?;
    println!("matched beam, same phases:           {best:.4e} J");
    println!("identity check: eta*t_s*P||e||^2 =   {:.4e} J", eta * t_s * p_b * e.norm_squared());

    let beams = decompose_covariance(&mrt.covariance_matrix())?;
    println!("that covariance decomposes into {} beam(s)", beams.len());

    let mut csv = Vec::new();
    ch.write_csv(&mut csv)?;
    println!("reproducibility dump: {} CSV bytes", csv.len());
    Ok(())
}
