fn main() {
    println!("{}", pbs_core::expr::probe_sin(0.5));
}
