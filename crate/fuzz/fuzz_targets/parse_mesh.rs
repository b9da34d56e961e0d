#![no_main]

use libfuzzer_sys::fuzz_target;
use navem::geometry::{parse_mesh, write_mesh};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(mesh) = parse_mesh(text) {
        let again = parse_mesh(&write_mesh(&mesh)).expect("written mesh must parse");
        assert_eq!(again.num_elements(), mesh.num_elements());
        assert_eq!(again.num_vertices(), mesh.num_vertices());
    }
});
