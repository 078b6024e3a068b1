//! C ABI for the mott-opt toolkit. Placeholder while the core crate lands.

#[no_mangle]
pub extern "C" fn mott_abi_version() -> u32 {
    1
}
