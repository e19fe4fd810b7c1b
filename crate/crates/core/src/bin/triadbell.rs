fn main() {
    println!("triadbell (in progress)");
}
