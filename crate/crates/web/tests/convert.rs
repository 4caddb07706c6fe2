use lineartist_web::{
    edges_rgba, gray_to_rgba, image_to_rgba, rgba_to_image, sketch_rgba, smooth_rgba,
};

fn canvas(w: usize, h: usize, f: impl Fn(usize, usize) -> u8) -> Vec<u8> {
    let mut out = Vec::with_capacity(w * h * 4);
    for y in 0..h {
        for x in 0..w {
            let v = f(x, y);
            out.extend([v, v, v, 255]);
        }
    }
    out
}

#[test]
fn rgba_round_trip() {
    let px: Vec<u8> = (0..=255u8).flat_map(|v| [v, 255 - v, v / 2, 17]).collect();
    let img = rgba_to_image(&px, 16, 16).unwrap();
    let back = image_to_rgba(&img);
    for (a, b) in px.chunks(4).zip(back.chunks(4)) {
        assert_eq!(&a[..3], &b[..3]);
        assert_eq!(b[3], 255);
    }
}

#[test]
fn wrong_buffer_length_is_rejected() {
    assert!(rgba_to_image(&[0; 15], 2, 2).is_err());
    assert!(smooth_rgba(&[0; 15], 2, 2, 0.02, 1.2).is_err());
}

#[test]
fn constant_canvas() {
    let c = canvas(24, 24, |_, _| 90);
    assert_eq!(smooth_rgba(&c, 24, 24, 0.02, 1.2).unwrap(), c);
    let s = sketch_rgba(&c, 24, 24, 8, 0, 0.1, 0.02).unwrap();
    assert!(s.chunks(4).all(|p| p == [255, 255, 255, 255]));
    let e = edges_rgba(&c, 24, 24, 1.4, 0.1, 0.2).unwrap();
    assert!(e.chunks(4).all(|p| p == [0, 0, 0, 255]));
}

#[test]
fn step_canvas_has_one_edge_column() {
    let c = canvas(16, 16, |x, _| if x < 8 { 0 } else { 255 });
    let e = edges_rgba(&c, 16, 16, 0.0, 0.1, 0.2).unwrap();
    let cols: std::collections::BTreeSet<usize> = e
        .chunks(4)
        .enumerate()
        .filter(|(_, p)| p[0] == 255)
        .map(|(i, _)| i % 16)
        .collect();
    assert_eq!(cols.len(), 1);
}

#[test]
fn invalid_parameters_are_errors() {
    let c = canvas(8, 8, |x, _| x as u8 * 30);
    assert!(smooth_rgba(&c, 8, 8, -1.0, 1.2).is_err());
    assert!(sketch_rgba(&c, 8, 8, 3, 0, 0.1, 0.0).is_err());
    assert!(edges_rgba(&c, 8, 8, 1.0, 0.5, 0.2).is_err());
    assert_eq!(
        gray_to_rgba(&lineartist::GrayImage::filled(1, 1, 1.0)),
        [255, 255, 255, 255]
    );
}
