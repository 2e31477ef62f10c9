//! Exact sizes of the mobile-scale layout and of the canonical toy space.
//!
//!     cargo run --release --example space_size

use blocknas::config::RunConfig;
use blocknas::numkernel::Activation;
use blocknas::space::{
    blocky_reduction, build_cost_lut, encode_arch, enumerate_space, mobile_layout, space_size,
    OpDescriptor,
};

fn main() -> blocknas::Result<()> {
    let catalog = [2, 4, 6]
        .iter()
        .flat_map(|&e| {
            [
                OpDescriptor::bottleneck(e, Activation::Relu),
                OpDescriptor::bottleneck(e, Activation::Tanh),
            ]
        })
        .collect();
    let mobile = mobile_layout(catalog)?;
    let size = space_size(&mobile);
    println!(
        "mobile layout, 6 ops: {size} architectures (~{:.1e})",
        size.to_string().parse::<f64>().unwrap()
    );
    for (k, block) in mobile.blocks.iter().enumerate() {
        println!(
            "  block {k}: {} block architectures, whole space / block = {}",
            block.size(),
            blocky_reduction(&mobile, k)?
        );
    }

    let cfg = RunConfig::default();
    let toy = cfg.search_space()?;
    let lut = build_cost_lut(&toy);
    let archs = enumerate_space(&toy);
    println!("canonical toy space: {} architectures", space_size(&toy));
    for arch in archs.iter().step_by(36) {
        let cost = lut.arch_cost(arch)?;
        println!(
            "  {:<24} {:>5} params {:>5} MACs",
            encode_arch(arch),
            cost.params,
            cost.macs
        );
    }
    Ok(())
}
